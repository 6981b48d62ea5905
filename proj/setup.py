from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "fedload._core",
    sources=[
        "src/tensor.cpp",
        "src/param_tree.cpp",
        "src/gradcheck.cpp",
        "src/layers.cpp",
        "src/adam.cpp",
        "src/data.cpp",
        "src/models.cpp",
        "src/federated.cpp",
        "src/metrics.cpp",
        "src/experiment.cpp",
        "src/cli.cpp",
        "src/bindings.cpp",
    ],
    include_dirs=["include", "vendor"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
