#!/usr/bin/env python

"""The setup script."""

from setuptools import setup, find_packages

with open('README.rst') as readme_file:
    readme = readme_file.read()

with open('HISTORY.rst') as history_file:
    history = history_file.read()

requirements = ['numpy>=1.20', 'networkx>=2.5', 'matplotlib>=3.4', 'Pillow>=8.0', 'tqdm>=4.50']

setup_requirements = ['pytest-runner', ]

test_requirements = ['pytest>=3', 'hypothesis>=6', 'scipy>=1.6']

setup(
    author="Francisco Moretti",
    author_email='franciscoemoretti@gmail.com',
    python_requires='>=3.8',
    classifiers=[
        'Development Status :: 2 - Pre-Alpha',
        'Intended Audience :: Developers',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    description="Py Latent Diffusion trains a class-conditional latent diffusion model with a "
    "ViT denoiser on a desk-sized synthetic dataset, in plain numpy.",
    entry_points={
        'console_scripts': [
            'py-latent-diffusion=py_latent_diffusion.cli:main',
        ],
    },
    install_requires=requirements,
    license="MIT license",
    long_description=readme + '\n\n' + history,
    include_package_data=True,
    keywords='py_latent_diffusion',
    name='py_latent_diffusion',
    packages=find_packages(include=['py_latent_diffusion', 'py_latent_diffusion.*']),
    setup_requires=setup_requirements,
    test_suite='tests',
    tests_require=test_requirements,
    url='https://github.com/FranciscoMoretti/py_latent_diffusion',
    version='0.1.0',
    zip_safe=False,
)
