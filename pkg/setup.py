from setuptools import setup


setup(
    name='aurafeat',
    version='0.1.0',
    description='Auditory-inspired acoustic features for speech recognition.',
    install_requires=['numpy>=1.20', 'scipy>=1.6'],
    tests_require=['pytest', 'hypothesis'],
    python_requires='>=3.8',
    packages=['aurafeat'],
    entry_points={
        'console_scripts': ['aurafeat=aurafeat.cli:main'],
    }
)
