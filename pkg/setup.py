from sys import version_info
from setuptools import setup

if version_info < (3, 5):
    raise Exception('Installation requires Python >= 3.5.')


def readme():
    with open('README.md') as f:
        return f.read()


def reqs():
    with open('requirements.txt') as f:
        return f.read().splitlines()


setup(name='SpeakerFlow',
      description='Semi-supervised generative modeling of speaker embeddings '
                  'with conditional masked autoregressive flows. A flow maps '
                  'embeddings into a base space where every labeled '
                  'attribute (e.g., gender, age, SNR) owns one coordinate '
                  'section and the rest is an isotropic residual, so the '
                  'same model can sample embeddings for (partial) labels, '
                  'classify them and edit one attribute while leaving the '
                  'others untouched.',
      long_description=readme(),
      version='0.1',
      install_requires=reqs(),
      packages=['data', 'src', 'util', 'tests'],
      package_data={'data': ['*.json']},
      include_package_data=True,
      scripts=['setup.sh'],
      entry_points={
          'console_scripts':
              ['speakerflow = util.speakerflow:main']},
      keywords='speaker embeddings normalizing flows generative models '
               'semi-supervised learning',
      license='MIT',
      classifiers=['Development Status :: 3 - Alpha',
                   'Intended Audience :: Science/Research',
                   'Intended Audience :: Developers',
                   'License :: OSI Approved :: MIT License',
                   'Programming Language :: Python :: 3',
                   'Topic :: Scientific/Engineering',
                   'Operating System :: POSIX',
                   'Operating System :: Unix',
                   'Operating System :: MacOS'],
      test_suite='nose2.collector.collector',
      zip_safe=False)
