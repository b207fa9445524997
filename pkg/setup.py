# -*- coding: utf-8 -*-
import re

from setuptools import find_packages, setup

requires = ["click", "numpy", "pandas", "pyyaml", "tqdm"]

extras_require = {"dev": ["pytest >= 6.0"]}

version = ""
with open("sgc/__init__.py") as fd:
    version = re.search(
        r'^__version__\s*=\s*[\'"]([^\'"]*)[\'"]', fd.read(), re.MULTILINE
    ).group(1)

with open("README.md", "rb") as f:
    readme = f.read().decode("utf-8")

setup(
    name="sgc",
    version=version,
    description="Sparse gradient compression optimizers with OMP recovery",
    long_description=readme,
    long_description_content_type="text/markdown",
    license="Apache 2.0",
    packages=find_packages(exclude=["tests"]),
    include_package_data=True,
    install_requires=requires,
    extras_require=extras_require,
    keywords="optimizer compressed sensing orthogonal matching pursuit adamw",
    classifiers=[
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "License :: OSI Approved :: Apache Software License",
        "Development Status :: 3 - Alpha",
    ],
    entry_points="""
        [console_scripts]
        sgc=sgc.main:cli
    """,
    python_requires=">=3.8",
)
