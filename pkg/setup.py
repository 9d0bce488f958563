from setuptools import setup, find_packages

setup(
    name="neuralheadx",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.22.0",
        "scipy>=1.9.0",
        "scikit-image>=0.19.0",
        "trimesh>=3.15.0",
        "tqdm>=4.64.0",
    ],
    python_requires=">=3.8",
    author="NeuralHeadX contributors",
    description="Neural parametric head models with locally decomposed identity fields and forward expression deformations",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    entry_points={
        "console_scripts": [
            "nphm=headmodel.cli:main",
        ],
    },
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "pytest-mock>=3.10.0",
        ],
    },
)
