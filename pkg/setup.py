from setuptools import setup, find_packages

setup(
    name="alert_flood_guard",
    version="1.0.0",
    packages=find_packages(exclude=["tests"]),
    py_modules=["app"],
    install_requires=[
        "python-dotenv",
        "pydantic>=2.5.0",
        "networkx>=3.0",
        "numpy",
        "cachetools",
    ],
    entry_points={
        "console_scripts": [
            "floodguard=app:main",
        ],
    },
)
