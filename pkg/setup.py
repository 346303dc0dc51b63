from setuptools import find_packages, setup

setup(
    name="bumpy_torus",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=["run"],
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "pydantic>=2",
        "python-dotenv",
        "psutil",
    ],
    entry_points={"console_scripts": ["bumpy-torus=run:main"]},
)
