"""Dwrfoil setup.py."""

from setuptools import setup

with open("README.md", encoding="utf-8") as file:
    long_description = file.read()

VERSION = "0.1.0"

setup(
    name="dwrfoil",
    version=VERSION,
    author="dwrfoil developers",
    license="BSD-2-Clause",
    description="Airfoil drag optimization with DWR-adapted Euler solves and a TD3 agent.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    keywords="cfd euler adjoint mesh-adaptation reinforcement-learning airfoil",
    classifiers=[
        "License :: OSI Approved :: BSD License",
        "Intended Audience :: Science/Research",
        "Development Status :: 3 - Alpha",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3 :: Only",
        "Topic :: Scientific/Engineering :: Physics",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Typing :: Typed",
    ],
    python_requires=">=3.9.0,<4.0.0",
    packages=["dwrfoil"],
    package_dir={"": "src"},
    include_package_data=True,
    install_requires=["numpy>=1.22", "scipy>=1.12", "torch>=2.0"],
    entry_points={
        "console_scripts": [
            "dwrfoil = dwrfoil._cli:main",
        ],
    },
)
