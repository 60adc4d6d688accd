from setuptools import setup, find_packages

setup(
    name="nodulemorph",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "pandas>=1.3.0",
        "numpy>=1.21.0",
        "openpyxl>=3.0.0",
        "matplotlib>=3.5.0",
        "seaborn>=0.11.0",
        "scipy>=1.7.0",
        "scikit-image>=0.19.0",
        "plotly",
        "jinja2"
    ],
    include_package_data=True,
    package_data={
        "nodulemorph.reporting": ["templates/*.html"],
    },
    entry_points={
        "console_scripts": ["nodulemorph = nodulemorph.cli:main"],
    },
)
