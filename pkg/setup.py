"""Build the optional compiled kernels; without Cython the pure-numpy kernels are used."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("TCL_NO_EXT", "").lower() not in {"1", "true", "yes"}:
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "tcl.kernels._ckernels",
                    ["src/tcl/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no -ffast-math: per-row results must stay bitwise reproducible
                    extra_compile_args=["-O2"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
