from setuptools import setup, find_packages

setup(
    name='opdomain',
    version='0.1.0',
    description='Finite-section checks of adjoint-domain criteria for infinite matrices and '
                'first-order differential operators.',
    packages=find_packages(where='packages'),
    package_dir={'': 'packages'},
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.10',
        'rich>=13.0.0',
    ],
    extras_require={
        'test': [
            'pytest>=7.0',
            'hypothesis>=6.0',
        ],
    },
    entry_points={
        'console_scripts': [
            'opdomain=opdomain.cli:main',
        ],
    },
    python_requires='>=3.10',
)
