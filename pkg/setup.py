# setup.py
from setuptools import setup, find_packages

setup(
    name="techzsky",
    version="1.0.0",
    author="TechShreyash",
    author_email="techshreyash123@gmail.com",
    description="Mountain skyline detection with learned filter banks and dynamic programming",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    url="https://github.com/TechShreyash/techzsky",
    packages=find_packages(exclude=("tests", "demos")),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    python_requires=">=3.9",
    install_requires=["numpy", "scipy", "Pillow", "aiofiles", "tqdm"],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["techzsky=techzsky.cli:main"]},
    license="MIT",
)
