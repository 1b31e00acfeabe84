import io
import os
from setuptools import find_packages, setup


def read(*paths, **kwargs):
    """Read the contents of a text file safely.
    >>> read("README.md")
    ...
    """

    content = ""
    with io.open(
        os.path.join(os.path.dirname(__file__), *paths),
        encoding=kwargs.get("encoding", "utf8"),
    ) as open_file:
        content = open_file.read().strip()
    return content


def read_requirements(path):
    return [
        line.strip()
        for line in read(path).split("\n")
        if line.strip() and not line.startswith(('"', "#", "-", "git+"))
    ]

setup(
    name="mpcert",
    version="0.1.0",
    description="Certified worst-case execution cost of an active-set QP solver for linear MPC",
    long_description=read("README.md"),
    packages=find_packages(exclude=["tests", ".github", "examples"]),
    package_data={"mpcert": ["Configurations/*.yaml"]},
    install_requires=read_requirements("requirements.txt"),
    entry_points={"console_scripts": ["mpcert = mpcert.cli:main"]},
    zip_safe=False,
)
