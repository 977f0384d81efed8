"""Build the optional compiled kernels; the package still works without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LATENT_STEER_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "latent_steer._ckernels",
                    ["src/latent_steer/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
