from setuptools import setup, find_packages

classifiers = [
    "Development Status :: 2 - Pre-Alpha",
    "Intended Audience :: Science/Research",
    "Intended Audience :: Developers",
    "License :: OSI Approved :: MIT License",
    "Programming Language :: Python :: 3",
    "Topic :: Scientific/Engineering :: Bio-Informatics",
]
setup(
    name="eqtlkit",
    version="0.1.1",
    description="Covariance-enhanced multi-tissue eQTL weight estimation with missing expression.",
    long_description=open("README.md").read(),
    url="",
    author="",
    author_email="",
    license="MIT",
    classifiers=classifiers,
    keywords="eqtl twas multivariate-regression graphical-lasso",
    packages=find_packages(exclude=["test", "test.*"]),
    install_requires=["pydantic<2", "tqdm", "numpy", "scipy", "pandas", "scikit-learn", "joblib"],
    entry_points={"console_scripts": ["eqtlkit=eqtlkit.cli:main"]},
)
