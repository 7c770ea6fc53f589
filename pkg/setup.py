from setuptools import setup
exec(open('sdritz/version.py').read())
setup(
  name='sdritz',
  packages=['sdritz', 'sdritz.problems', 'sdritz.stats', 'sdritz.utilities', 'sdritz.example'],
  package_data={'': ['*.json']},
  version=__release__,
  description='This Python package solves elliptic PDEs with random coefficients by training a single neural network u(x, z) on a Monte Carlo estimate of the stochastic Ritz energy, and checks the result against exact solutions, weak-form residuals and marginal densities.',
  author='The sdritz developers',
  license='MIT',
  keywords=['stochastic PDE', 'deep Ritz method', 'uncertainty quantification', 'neural networks'],
  python_requires='>=3.8',
  install_requires=['numpy>=1.20',
                    'scipy>=1.6',
                    'sympy',
                    'pandas',
                    'numdifftools',
                    'uncertainties',
                    'tqdm'],
  extras_require={'test': ['pytest']},
  entry_points={'console_scripts': ['sdr=sdritz.cli:main']},
  classifiers=['Development Status :: 4 - Beta',
               'Intended Audience :: Science/Research',
               'License :: OSI Approved :: MIT License',
               'Operating System :: OS Independent',
               'Programming Language :: Python :: 3',
               'Topic :: Scientific/Engineering :: Mathematics'],
)
