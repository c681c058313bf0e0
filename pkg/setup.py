"""Build the optional compiled kernels; the package works without them."""
import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("KSCRIT_NO_EXTENSION"):
    ext_modules = cythonize(
        [
            Extension(
                "kscrit._ckernels",
                ["src/kscrit/_ckernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
