import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MANAGEDCOIN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "managedcoin._kernels",
                    ["src/managedcoin/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
