import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CRACKLING_KZM_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "crackling_kzm._kernels",
                    ["src/crackling_kzm/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: the compiled and fallback paths must agree bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
