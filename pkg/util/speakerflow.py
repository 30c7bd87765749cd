"""
Command-line utility tying the pipeline together: generate synthetic
corpora, fit GMM baselines, train flows, sample, classify, edit and
evaluate. Every run writes a manifest JSON file (command, configuration,
seed and content hashes of the inputs) next to its outputs.
"""
import sys
import logging
from json import (dump,
                  load)
from os import makedirs
from os.path import (join,
                     isdir,
                     isfile,
                     dirname,
                     realpath)

import numpy as np
import pandas as pd
from typing import (Any,
                    Dict,
                    List,
                    Tuple,
                    Optional)
from schema import SchemaError
from argparse import (ArgumentParser,
                      ArgumentDefaultsHelpFormatter)

from data import (PRESETS,
                  DEFAULT_SCHEMA_PATH)
from src import (formatter,
                 get_default_seed,
                 write_manifest,
                 parse_fractions_string,
                 parse_assignments_string)
from src.base import (MultiLabel,
                      LabelSchema,
                      default_schema)
from src.distributions import (DEFAULT_K,
                               EmConfig,
                               GmmModel,
                               gmm_sample)
from src.supporting import (SupportingPool,
                            fit_supporting)
from src.flow import (FlowModel,
                      TrainConfig,
                      FlowTrainer,
                      edit_batch,
                      sample_labels,
                      read_embeddings as flow_readout,
                      classify_embeddings)
from src.separate_flows import (SeparateFlows,
                                train_separate_flows)
from src import tacospawn
from src.tacospawn import ConditionalGmm
from src.synthcorpus import (DTYPES,
                             Corpus,
                             GeneratorSpec,
                             generate,
                             drop_labels,
                             oracle_label,
                             oracle_values,
                             read_embeddings,
                             write_embeddings)
from src.metrics import (pearson_r,
                         cos_distance,
                         distance_report,
                         snr_bin_cliques,
                         attribute_accuracy)

logger = logging.getLogger('util.speakerflow')
logging_debug = logging.DEBUG
logger.setLevel(logging_debug)
loginfo = logger.info
logerr = logger.error
logdebug = logger.debug
logwarn = logger.warning

MANIFEST_FILE = 'manifest.json'
GENERATOR_FILE = 'generator.json'
MODEL_KINDS = {'gmm': GmmModel,
               'supporting': SupportingPool,
               'flow': FlowModel,
               'conditional_gmm': ConditionalGmm,
               'separate_flows': SeparateFlows}
HANDLED_ERRORS = (ValueError, KeyError, FileNotFoundError, SchemaError, OSError)


def load_model(path: str):
    """
    Load any model file written by this package, dispatching on its
    "kind" field (files without one are plain GMMs).

    :raises FileNotFoundError: if the file does not exist
    :raises ValueError: if the kind is unknown
    """

    if not isfile(path):
        raise FileNotFoundError('Model file {0} does not exist.'.format(path))
    with open(path) as f:
        document = load(f)
    kind = document.get('kind', 'gmm') if isinstance(document, dict) else None
    if kind not in MODEL_KINDS:
        raise ValueError('Unknown model kind in {0}: {1}.'.format(path, kind))
    return MODEL_KINDS[kind].from_dict(document)


def _load_schema(path: Optional[str], d: Optional[int] = None) -> LabelSchema:
    if path:
        if not isfile(path):
            raise FileNotFoundError('Schema file {0} does not exist.'.format(path))
        schema = LabelSchema.load(path)
        if d is not None:
            schema.check_dim(d)
        return schema
    if d is not None:
        return default_schema(d)
    return LabelSchema.load(DEFAULT_SCHEMA_PATH)


def _load_corpus(corpus_dir: str) -> Corpus:
    if not isdir(corpus_dir):
        raise FileNotFoundError('Corpus directory {0} does not exist.'
                                .format(corpus_dir))
    return Corpus.load(corpus_dir)


def _corpus_inputs(corpus_dir: str) -> List[str]:
    return [join(corpus_dir, name) for name in ['embeddings.bin', 'labels.csv',
                                                'truth.csv', 'schema.json']]


def _load_generator(path: Optional[str]) -> Optional[GeneratorSpec]:
    if not path:
        return None
    if not isfile(path):
        raise FileNotFoundError('Generator file {0} does not exist.'.format(path))
    return GeneratorSpec.load(path)


def _parse_label(label_string: Optional[str], schema: LabelSchema) -> MultiLabel:
    if not label_string:
        return MultiLabel.empty(schema)
    return MultiLabel.from_assignments(parse_assignments_string(label_string),
                                       schema)


def _write_frame(frame: pd.DataFrame, path: str) -> str:
    frame.to_csv(path, index=False)
    loginfo('Wrote {0}'.format(path))
    return path


def _write_json(document: Dict[str, Any], path: str) -> str:
    with open(path, 'w') as f:
        dump(document, f, indent=2, sort_keys=True)
        f.write('\n')
    loginfo('Wrote {0}'.format(path))
    return path


def _em_config(args) -> EmConfig:
    return EmConfig(max_iters=args.max_iters, tol=args.tol, rng_seed=args.seed)


def _train_config(args) -> TrainConfig:
    return TrainConfig(batch_size=args.batch_size,
                       reg_batch_size=args.reg_batch_size,
                       perturbation_scale=args.perturbation_scale,
                       learning_rate=args.learning_rate,
                       max_epochs=args.max_epochs,
                       patience=args.patience,
                       n_layers=args.n_layers,
                       hidden_size=args.hidden_size,
                       rng_seed=args.seed)


def run_synth(args) -> None:
    out_dir = realpath(args.out_dir)
    schema = _load_schema(args.schema, None if args.schema else args.d)
    overrides = {'n_speakers': args.n_speakers,
                 'noise': args.noise,
                 'val_fraction': args.val_fraction,
                 'direction_seed': args.seed}
    if args.separation is not None:
        overrides['separation'] = args.separation
    spec = GeneratorSpec.preset(args.preset, schema=schema, **overrides)
    corpus = generate(spec, rng_seed=args.seed)
    if args.keep:
        for offset, (name, fraction) in enumerate(sorted(parse_fractions_string(args.keep)
                                                         .items())):
            corpus = drop_labels(corpus, name, fraction, rng_seed=args.seed + offset + 1)
            loginfo('Kept "{0}" labels on {1} of {2} items.'
                    .format(name, corpus.n_observed(name), len(corpus)))
    corpus.save(out_dir, dtype=args.dtype)
    spec.save(join(out_dir, GENERATOR_FILE))
    config = spec.to_dict()
    config.update({'preset': args.preset, 'keep': args.keep, 'dtype': args.dtype})
    write_manifest(join(out_dir, MANIFEST_FILE), 'synth', config, args.seed,
                   inputs=[args.schema] if args.schema else [])


def run_fit_gmm(args) -> None:
    corpus = _load_corpus(args.corpus)
    train = corpus.train()
    em_config = _em_config(args)
    if args.kind == 'supporting':
        model = fit_supporting(train, group_by=args.group_by, K=args.K,
                               em_config=em_config)
    else:
        if not args.conditions:
            raise ValueError('--conditions is required for a conditional GMM.')
        conditions = [name.strip() for name in args.conditions.split(',')]
        indices = [train.schema.index(name) for name in conditions]
        source = train.truth if args.use_truth else train.labels
        rows = [row for row, label in enumerate(source)
                if all(label.values[index] is not None for index in indices)]
        if len(rows) < len(train):
            logwarn('Fitting the conditional GMM on the {0} of {1} training items '
                    'labeled on {2}.'.format(len(rows), len(train),
                                             ', '.join(conditions)))
        if not rows:
            raise ValueError('No training items are labeled on {0}.'
                             .format(', '.join(conditions)))
        model = tacospawn.fit(train.subset(rows), conditions, K=args.K,
                              em_config=em_config, n_jobs=args.n_jobs,
                              use_truth=args.use_truth)
    out = realpath(args.out)
    makedirs(dirname(out), exist_ok=True)
    model.save(out)
    loginfo('Wrote {0}'.format(out))
    config = {'kind': args.kind, 'K': args.K, 'group_by': args.group_by,
              'conditions': args.conditions, 'use_truth': args.use_truth,
              'em': em_config.to_dict()}
    write_manifest(join(dirname(out), MANIFEST_FILE), 'fit-gmm', config,
                   args.seed, inputs=_corpus_inputs(args.corpus))


def run_train(args) -> None:
    corpus = _load_corpus(args.corpus)
    train, val = corpus.train(), corpus.val()
    if not len(val):
        raise ValueError('Corpus {0} has no validation items.'.format(args.corpus))
    config = _train_config(args)
    inputs = _corpus_inputs(args.corpus)
    if args.separate:
        model = train_separate_flows(train, val, corpus.schema, args.separate,
                                     config=config)
    else:
        supporting = None
        if args.supporting:
            supporting = load_model(args.supporting)
            if not isinstance(supporting, (GmmModel, SupportingPool)):
                raise ValueError('{0} is not a supporting GMM or pool.'
                                 .format(args.supporting))
            inputs.append(args.supporting)
        labeler = None
        spec = _load_generator(args.generator)
        if spec is not None:
            inputs.append(args.generator)
            attrs = [attr.name for attr in corpus.schema.attributes
                     if not attr.is_categorical]
            loginfo('Labeling regularization data post hoc for: {0}.'
                    .format(', '.join(attrs) or 'nothing'))
            labeler = lambda E: oracle_label(spec, E, attrs)
        trainer = FlowTrainer(corpus.schema, config=config,
                              supporting=supporting, labeler=labeler)
        model = trainer.fit(train.embeddings, train.labels, val.embeddings,
                            val.labels)
        out_dir = dirname(realpath(args.out))
        makedirs(out_dir, exist_ok=True)
        _write_frame(pd.DataFrame(trainer.history_,
                                  columns=['epoch', 'train_loss', 'val_loglik']),
                     join(out_dir, 'history.csv'))
    out = realpath(args.out)
    makedirs(dirname(out), exist_ok=True)
    model.save(out)
    loginfo('Wrote {0}'.format(out))
    document = config.to_dict()
    document.update({'separate': args.separate})
    write_manifest(join(dirname(out), MANIFEST_FILE), 'train', document,
                   args.seed, inputs=inputs)


def _sample(model, label_string: Optional[str], n: int, seed: int) \
    -> Tuple[np.ndarray, pd.DataFrame]:
    if isinstance(model, FlowModel):
        y = _parse_label(label_string, model.schema)
        E = sample_labels(model, [y]*n, rng_seed=seed)
        labels = pd.DataFrame([['' if v is None else str(v) for v in y.values]]*n,
                              columns=list(model.schema.names))
    elif isinstance(model, ConditionalGmm):
        if label_string:
            assignments = parse_assignments_string(label_string)
            condition = tuple(assignments.get(name) for name in model.conditions)
            E = tacospawn.sample_conditional(model, condition, n, rng_seed=seed)
            conditions = [condition]*n
        else:
            E, conditions = tacospawn.sample_unconditional(model, n, rng_seed=seed)
        labels = pd.DataFrame([list(c) for c in conditions],
                              columns=list(model.conditions))
    elif isinstance(model, SeparateFlows):
        if label_string:
            value = parse_assignments_string(label_string).get(model.attr)
            if value is None:
                raise ValueError('--label must assign "{0}" for separate flows.'
                                 .format(model.attr))
            E = model.sample(value, n, rng_seed=seed)
        else:
            E = model.sample_unconditional(n, rng_seed=seed)
            value = ''
        labels = pd.DataFrame({model.attr: [value]*n})
    elif isinstance(model, SupportingPool):
        E, templates = model.sample(n, rng_seed=seed)
        labels = pd.DataFrame([['' if v is None else str(v) for v in t.values]
                               for t in templates],
                              columns=list(model.schema.names))
    else:
        E = gmm_sample(model, n, rng_seed=seed)
        labels = pd.DataFrame(index=range(n))
    return E, labels


def run_sample(args) -> None:
    if args.n < 1:
        raise ValueError('-n must be at least 1, got {0}.'.format(args.n))
    model = load_model(args.model)
    E, labels = _sample(model, args.label, args.n, args.seed)
    out_dir = realpath(args.out_dir)
    makedirs(out_dir, exist_ok=True)
    write_embeddings(join(out_dir, 'embeddings.bin'), E, dtype=args.dtype)
    _write_frame(labels, join(out_dir, 'labels.csv'))
    write_manifest(join(out_dir, MANIFEST_FILE), 'sample',
                   {'label': args.label, 'n': args.n, 'dtype': args.dtype},
                   args.seed, inputs=[args.model])


def _read_inputs(args) -> Tuple[np.ndarray, List[str]]:
    if bool(args.corpus) == bool(args.embeddings):
        raise ValueError('Give exactly one of --corpus and --embeddings.')
    if args.corpus:
        return _load_corpus(args.corpus).embeddings, _corpus_inputs(args.corpus)
    return read_embeddings(args.embeddings), [args.embeddings]


def run_classify(args) -> None:
    model = load_model(args.model)
    E, inputs = _read_inputs(args)
    frame = pd.DataFrame({'item': np.arange(E.shape[0])})
    if isinstance(model, FlowModel):
        attr = model.schema.attribute(args.attr)
        if attr.is_categorical:
            posteriors = classify_embeddings(model, E, attr.name)
            classes = attr.classes
        else:
            frame['value'] = flow_readout(model, E, attr.name)
            classes = None
    elif isinstance(model, ConditionalGmm):
        posteriors = model.classify(E, args.attr)
        classes = list(model.classes[model.conditions.index(args.attr)])
    elif isinstance(model, SeparateFlows):
        if args.attr != model.attr:
            raise ValueError('These separate flows classify "{0}", not "{1}".'
                             .format(model.attr, args.attr))
        posteriors = model.classify(E)
        classes = model.classes
    else:
        raise ValueError('{0} cannot classify embeddings.'.format(args.model))
    if classes is not None:
        frame['predicted'] = [classes[j] for j in np.argmax(posteriors, axis=1)]
        for j, value in enumerate(classes):
            frame['p_{0}'.format(value)] = posteriors[:, j]
    out = realpath(args.out)
    makedirs(dirname(out), exist_ok=True)
    _write_frame(frame, out)
    write_manifest(join(dirname(out), MANIFEST_FILE), 'classify',
                   {'attr': args.attr}, args.seed,
                   inputs=[args.model] + inputs)


def run_edit(args) -> None:
    model = load_model(args.model)
    if not isinstance(model, FlowModel):
        raise ValueError('Editing needs a flow model; {0} is not one.'
                         .format(args.model))
    if (args.delta is None) == (args.set is None):
        raise ValueError('Give exactly one of --delta and --set.')
    E, inputs = _read_inputs(args)
    rows = np.arange(E.shape[0])
    if args.below is not None:
        if not args.corpus:
            raise ValueError('--below needs --corpus (it selects on the ground '
                             'truth).')
        truth = np.array(_load_corpus(args.corpus).truth_values(args.attr),
                         dtype=np.float64)
        rows = np.flatnonzero(truth < args.below)
        loginfo('Editing the {0} items with {1} below {2}.'
                .format(rows.size, args.attr, args.below))
        if not rows.size:
            raise ValueError('No items have {0} below {1}.'
                             .format(args.attr, args.below))
    value = args.set
    edited = edit_batch(model, E[rows], args.attr, value=value, delta=args.delta)
    frame = pd.DataFrame({'item': rows,
                          'cos_distance': [cos_distance(a, b) for a, b
                                           in zip(E[rows], edited)]})
    attr = model.schema.attribute(args.attr)
    spec = _load_generator(args.generator)
    if spec is not None:
        inputs.append(args.generator)
        frame['oracle_before'] = oracle_values(spec, E[rows], attr.name)
        frame['oracle_after'] = oracle_values(spec, edited, attr.name)
    elif not attr.is_categorical:
        frame['readout_before'] = flow_readout(model, E[rows], attr.name)
        frame['readout_after'] = flow_readout(model, edited, attr.name)
    out_dir = realpath(args.out_dir)
    makedirs(out_dir, exist_ok=True)
    write_embeddings(join(out_dir, 'edited.bin'), edited, dtype=args.dtype)
    _write_frame(frame, join(out_dir, 'edits.csv'))
    write_manifest(join(out_dir, MANIFEST_FILE), 'edit',
                   {'attr': args.attr, 'delta': args.delta, 'set': args.set,
                    'below': args.below, 'dtype': args.dtype},
                   args.seed, inputs=[args.model] + inputs)


def _generated(model, n: int, seed: int) -> np.ndarray:
    return _sample(model, None, n, seed)[0]


def _generation_agreement(model, spec: GeneratorSpec, attr, n: int, seed: int) \
    -> Optional[float]:
    """
    Oracle agreement of embeddings generated for every class of a
    categorical attribute (n / C per class).
    """

    per_class = max(1, n//attr.n_classes)
    predicted, wanted = [], []
    for offset, value in enumerate(attr.classes):
        if isinstance(model, FlowModel):
            y = MultiLabel.from_assignments({attr.name: value}, model.schema)
            E = sample_labels(model, [y]*per_class, rng_seed=seed + offset)
        elif isinstance(model, SeparateFlows) and model.attr == attr.name:
            E = model.sample(value, per_class, rng_seed=seed + offset)
        elif isinstance(model, ConditionalGmm) and attr.name in model.conditions:
            index = model.conditions.index(attr.name)
            keys = [key for key in model.table if key[index] == value]
            if not keys:
                return None
            counts = np.array([model.counts[key] for key in keys], dtype=np.float64)
            key = keys[int(np.argmax(counts))]
            E = tacospawn.sample_conditional(model, key, per_class,
                                             rng_seed=seed + offset)
        else:
            return None
        predicted.extend(oracle_values(spec, E, attr.name))
        wanted.extend([value]*per_class)
    return attribute_accuracy(predicted, wanted)


def run_eval(args) -> None:
    corpus = _load_corpus(args.corpus)
    spec = _load_generator(args.generator or join(args.corpus, GENERATOR_FILE))
    inputs = _corpus_inputs(args.corpus) + [args.generator
                                            or join(args.corpus, GENERATOR_FILE)]
    models = []
    for name, path in [('flow', args.model), ('baseline', args.baseline),
                       ('ablation', args.ablation)]:
        if path:
            models.append((name, load_model(path)))
            inputs.append(path)
    if not models:
        raise ValueError('Nothing to evaluate: give --model, --baseline or '
                         '--ablation.')
    out_dir = realpath(args.out_dir)
    makedirs(out_dir, exist_ok=True)
    val = corpus.val() if len(corpus.val()) else corpus
    schema = corpus.schema

    if args.clique and not args.snr_bins > 0:
        raise ValueError('Clique estimates need a positive --snr-bins width, '
                         'got {0}.'.format(args.snr_bins))

    distances = {}
    distance_rows = []
    accuracy_rows = []
    control_rows = []
    for offset, (name, model) in enumerate(models):
        seed = args.seed + 1000*offset
        generated = _generated(model, args.n_samples, seed)
        report = distance_report(corpus.embeddings, generated)
        distances[name] = report.to_dict()
        distance_rows.extend([(name, metric, value)
                              for metric, value in report.to_rows()])
        for attr in schema.attributes:
            if not attr.is_categorical:
                continue
            truth = val.truth_values(attr.name)
            if isinstance(model, FlowModel):
                posteriors = classify_embeddings(model, val.embeddings, attr.name)
            elif isinstance(model, ConditionalGmm) and attr.name in model.conditions:
                posteriors = model.classify(val.embeddings, attr.name)
            elif isinstance(model, SeparateFlows) and model.attr == attr.name:
                posteriors = model.classify(val.embeddings)
            else:
                continue
            predicted = [attr.classes[j] for j in np.argmax(posteriors, axis=1)]
            accuracy_rows.append((name, attr.name, 'classification',
                                  attribute_accuracy(predicted, truth)))
            agreement = _generation_agreement(model, spec, attr, args.n_samples,
                                              seed + 1)
            if agreement is not None:
                accuracy_rows.append((name, attr.name, 'generation', agreement))
        if isinstance(model, FlowModel):
            for index, attr in enumerate(schema.attributes):
                if attr.is_categorical:
                    continue
                a, b = attr.value_range
                values = np.linspace(a, b, args.n_samples)
                labels = [MultiLabel.empty(model.schema).with_value(index, float(v),
                                                                    model.schema)
                          for v in values]
                E = sample_labels(model, labels, rng_seed=seed + 2)
                measured = oracle_values(spec, E, attr.name)
                control_rows.append((name, attr.name,
                                     pearson_r(values, measured)))
                if args.clique:
                    threshold = args.clique_threshold or report.s2s
                    for set_name, points, bin_values in [
                        ('real', corpus.embeddings, corpus.truth_values(attr.name)),
                        (name, E, values)]:
                        bins = snr_bin_cliques(points, bin_values, args.snr_bins,
                                               threshold)
                        bins.insert(0, 'attr', attr.name)
                        bins.insert(0, 'set', set_name)
                        bins.insert(len(bins.columns), 'threshold', threshold)
                        _write_frame(bins, join(out_dir, 'cliques_{0}_{1}.csv'
                                                         .format(set_name,
                                                                 attr.name)))
    for attr in schema.attributes:
        if attr.is_categorical:
            accuracy_rows.append(('oracle', attr.name, 'classification',
                                  attribute_accuracy(oracle_values(spec,
                                                                   val.embeddings,
                                                                   attr.name),
                                                     val.truth_values(attr.name))))

    _write_frame(pd.DataFrame(distance_rows, columns=['model', 'metric', 'value']),
                 join(out_dir, 'distances.csv'))
    _write_frame(pd.DataFrame(accuracy_rows,
                              columns=['model', 'attr', 'task', 'accuracy']),
                 join(out_dir, 'accuracy.csv'))
    _write_frame(pd.DataFrame(control_rows, columns=['model', 'attr', 'pearson_r']),
                 join(out_dir, 'controllability.csv'))
    _write_json(distances, join(out_dir, 'distances.json'))
    summary = {'accuracy': {}, 'pearson_r': {}}
    for name, attr, task, accuracy in accuracy_rows:
        summary['accuracy'].setdefault(name, {}).setdefault(attr, {})[task] = accuracy
    for name, attr, r in control_rows:
        summary['pearson_r'].setdefault(name, {})[attr] = r
    _write_json(summary, join(out_dir, 'summary.json'))
    write_manifest(join(out_dir, MANIFEST_FILE), 'eval',
                   {'n_samples': args.n_samples, 'clique': args.clique,
                    'snr_bins': args.snr_bins,
                    'clique_threshold': args.clique_threshold},
                   args.seed, inputs=inputs)


def _add_training_args(_add_arg) -> None:
    _add_arg('--batch_size', help='Corpus items per step.', type=int, default=64)
    _add_arg('--reg_batch_size',
             help='Regularization embeddings drawn from the supporting '
                  'distribution per step.',
             type=int,
             default=64)
    _add_arg('--perturbation_scale',
             help='Standard deviation of the perturbation used for '
                  'pseudo-labels (default: 0.05 times the median '
                  'nearest-neighbour distance of the training embeddings).',
             type=float,
             default=None)
    _add_arg('--learning_rate', help='Step size.', type=float, default=1e-3)
    _add_arg('--max_epochs', help='Maximum number of epochs.', type=int,
             default=200)
    _add_arg('--patience',
             help='Epochs without validation improvement before stopping.',
             type=int,
             default=10)
    _add_arg('--n_layers', help='Number of flow layers.', type=int, default=5)
    _add_arg('--hidden_size',
             help='Width of the hidden layers (default: max(2d, 64)).',
             type=int,
             default=None)


def _parser() -> ArgumentParser:
    parser = ArgumentParser(description='Train and evaluate semi-supervised '
                                        'flow models of speaker embeddings.',
                            formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = parser.add_argument
    _add_arg('--seed',
             help='Random seed (the SPEAKERFLOW_SEED environment variable sets '
                  'the default).',
             type=int,
             default=None)
    _add_arg('-log', '--log_file_path',
             help='Path to log file. If no path is specified, a "logs" '
                  'directory is created next to the outputs.',
             type=str,
             required=False)
    subparsers = parser.add_subparsers(dest='command')

    synth = subparsers.add_parser('synth', help='Generate a synthetic corpus.',
                                  formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = synth.add_argument
    _add_arg('--out_dir', help='Corpus directory.', type=str, required=True)
    _add_arg('--preset', help='Difficulty preset.', choices=sorted(PRESETS),
             default='easy')
    _add_arg('--d', help='Dimension (ignored when --schema is given).', type=int,
             default=64)
    _add_arg('--schema', help='Label schema JSON file.', type=str, default=None)
    _add_arg('--n_speakers', help='Number of items.', type=int, default=1200)
    _add_arg('--noise', help='Noise standard deviation.', type=float, default=1.0)
    _add_arg('--separation',
             help='Class separation in noise standard deviations (overrides '
                  'the preset).',
             type=float,
             default=None)
    _add_arg('--val_fraction', help='Share of validation items.', type=float,
             default=0.1)
    _add_arg('--keep',
             help='Comma-separated NAME=FRACTION list of label shares to keep, '
                  'e.g., "gender=0.3,age=0.3".',
             type=str,
             default=None)
    _add_arg('--dtype', help='Embedding file precision.', choices=sorted(DTYPES),
             default='f64')

    fit_gmm = subparsers.add_parser('fit-gmm',
                                    help='Fit a supporting or conditional GMM.',
                                    formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = fit_gmm.add_argument
    _add_arg('--corpus', help='Corpus directory.', type=str, required=True)
    _add_arg('--out', help='Model file.', type=str, required=True)
    _add_arg('--kind', help='Model kind.', choices=['supporting', 'conditional'],
             default='supporting')
    _add_arg('--group_by',
             help='Categorical attribute to fit one supporting GMM per class of.',
             type=str,
             default=None)
    _add_arg('--conditions',
             help='Comma-separated categorical attributes of a conditional GMM.',
             type=str,
             default=None)
    _add_arg('--use_truth',
             help='Condition on the ground truth instead of the labels.',
             action='store_true',
             default=False)
    _add_arg('-K', help='Number of mixture components.', type=int,
             default=DEFAULT_K)
    _add_arg('--max_iters', help='Maximum number of EM iterations.', type=int,
             default=200)
    _add_arg('--tol', help='EM convergence tolerance.', type=float, default=1e-6)
    _add_arg('--n_jobs', help='Parallel EM fits.', type=int, default=1)

    train = subparsers.add_parser('train', help='Train a flow.',
                                  formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = train.add_argument
    _add_arg('--corpus', help='Corpus directory.', type=str, required=True)
    _add_arg('--out', help='Model file.', type=str, required=True)
    _add_arg('--supporting',
             help='Supporting GMM or pool file (enables regularization data).',
             type=str,
             default=None)
    _add_arg('--generator',
             help='Generator file used to label continuous attributes of the '
                  'regularization data post hoc.',
             type=str,
             default=None)
    _add_arg('--separate',
             help='Train one unconditional flow per class of this attribute '
                  'instead.',
             type=str,
             default=None)
    _add_training_args(_add_arg)

    sample = subparsers.add_parser('sample', help='Generate embeddings.',
                                   formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = sample.add_argument
    _add_arg('--model', help='Model file.', type=str, required=True)
    _add_arg('--label',
             help='Comma-separated NAME=VALUE conditions; NAME=_ leaves a value '
                  'unobserved.',
             type=str,
             default=None)
    _add_arg('-n', help='Number of embeddings.', type=int, default=100)
    _add_arg('--out_dir', help='Output directory.', type=str, required=True)
    _add_arg('--dtype', help='Embedding file precision.', choices=sorted(DTYPES),
             default='f64')

    classify = subparsers.add_parser('classify', help='Classify embeddings.',
                                     formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = classify.add_argument
    _add_arg('--model', help='Model file.', type=str, required=True)
    _add_arg('--corpus', help='Corpus directory.', type=str, default=None)
    _add_arg('--embeddings', help='Embeddings file.', type=str, default=None)
    _add_arg('--attr', help='Attribute name.', type=str, required=True)
    _add_arg('--out', help='Output CSV file.', type=str, required=True)

    edit = subparsers.add_parser('edit', help='Edit an attribute of embeddings.',
                                 formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = edit.add_argument
    _add_arg('--model', help='Flow model file.', type=str, required=True)
    _add_arg('--corpus', help='Corpus directory.', type=str, default=None)
    _add_arg('--embeddings', help='Embeddings file.', type=str, default=None)
    _add_arg('--attr', help='Attribute name.', type=str, required=True)
    _add_arg('--delta', help='Increment of a continuous attribute.', type=float,
             default=None)
    _add_arg('--set', help='New class or value.', type=str, default=None)
    _add_arg('--below',
             help='Only edit corpus items whose true value is below this.',
             type=float,
             default=None)
    _add_arg('--generator',
             help='Generator file for oracle measurements of the edits.',
             type=str,
             default=None)
    _add_arg('--out_dir', help='Output directory.', type=str, required=True)
    _add_arg('--dtype', help='Embedding file precision.', choices=sorted(DTYPES),
             default='f64')

    evaluate = subparsers.add_parser('eval', help='Evaluate models.',
                                     formatter_class=ArgumentDefaultsHelpFormatter)
    _add_arg = evaluate.add_argument
    _add_arg('--corpus', help='Corpus directory.', type=str, required=True)
    _add_arg('--generator',
             help='Generator file (default: the one in the corpus directory).',
             type=str,
             default=None)
    _add_arg('--model', help='Flow model file.', type=str, default=None)
    _add_arg('--baseline', help='Conditional GMM file.', type=str, default=None)
    _add_arg('--ablation', help='Separate flows file.', type=str, default=None)
    _add_arg('--n_samples', help='Generated embeddings per model.', type=int,
             default=1000)
    _add_arg('--clique',
             help='Write clique-number estimates per value bin of every '
                  'continuous attribute.',
             action='store_true',
             default=False)
    _add_arg('--snr_bins', '--snr-bins',
             dest='snr_bins',
             help='Width of the value bins of the clique estimates.',
             type=float,
             default=10.0)
    _add_arg('--clique_threshold',
             help='Cosine distance threshold of the clique estimates '
                  '(default: the s2s statistic).',
             type=float,
             default=None)
    _add_arg('--out_dir', help='Output directory.', type=str, required=True)
    return parser


COMMANDS = {'synth': run_synth,
            'fit-gmm': run_fit_gmm,
            'train': run_train,
            'sample': run_sample,
            'classify': run_classify,
            'edit': run_edit,
            'eval': run_eval}


def _output_dir(args) -> str:
    for name in ['out_dir', 'out']:
        path = getattr(args, name, None)
        if path:
            return realpath(path) if name == 'out_dir' else dirname(realpath(path))
    return realpath('.')


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        sys.stderr.write('error: a subcommand is required\n')
        return 2

    package_logger = logging.getLogger('src')
    package_logger.setLevel(logging_debug)
    handlers = []
    try:
        if args.seed is None:
            args.seed = get_default_seed()
        log_file_path = (realpath(args.log_file_path) if args.log_file_path
                         else join(_output_dir(args), 'logs', 'speakerflow.log'))
        makedirs(dirname(log_file_path), exist_ok=True)
        sh = logging.StreamHandler()
        sh.setLevel(logging.INFO)
        file_handler = logging.FileHandler(log_file_path)
        file_handler.setLevel(logging_debug)
        for handler in [sh, file_handler]:
            handler.setFormatter(formatter)
            logger.addHandler(handler)
            package_logger.addHandler(handler)
            handlers.append(handler)
        loginfo('Command: {0}'.format(args.command))
        loginfo('Seed: {0}'.format(args.seed))
        COMMANDS[args.command](args)
    except HANDLED_ERRORS as e:
        logerr('{0}: {1}'.format(type(e).__name__, e))
        sys.stderr.write('speakerflow {0}: error: {1}\n'.format(args.command, e))
        return 1
    finally:
        for handler in handlers:
            logger.removeHandler(handler)
            package_logger.removeHandler(handler)
            handler.close()
    return 0


if __name__ == '__main__':
    sys.exit(main())
