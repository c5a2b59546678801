"""Build the optional compiled kernel.

The package works without it: ``stoc.kernels`` falls back to numpy when
the extension cannot be imported. Set ``STOC_NO_EXT=1`` to skip the build.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("STOC_NO_EXT"):
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
                    "stoc._kernel",
                    ["src/stoc/_kernel.pyx", "src/stoc/_kernel_core.c"],
                    include_dirs=[np.get_include(), "src/stoc"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # -ffast-math at compile time only: linking with it would
                    # switch the whole process to flush-to-zero.
                    extra_compile_args=["-O3", "-ffast-math"],
                    libraries=["mvec", "m"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
