import setuptools

setuptools.setup(
    name="spikecrown",
    version="0.1.0",

    description="Multi-spike alternate-sign solutions of singularly perturbed Dirichlet problems on convex planar "
                "domains: ground states, crown packings, reduced energies and full nonlinear solves",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",

    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),

    install_requires=[
        "asyncblink",
        "blinker<1.8",
        "ruamel.yaml",
        "numpy",
        "scipy>=1.10",
    ],
    extras_require={
        "test": ["pytest", "mpmath"],
    },
    entry_points={
        "console_scripts": ["spike-crown=spikecrown.cli:main"],
    },

    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.8",
)
