"""Build script: compiles the optional numeric kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the compiled kernels just make training faster.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "forestnmt.numcore._ckernels",
                ["src/forestnmt/numcore/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    import warnings

    warnings.warn(f"building without compiled kernels ({exc}); using numpy fallback")

setup(ext_modules=ext_modules)
