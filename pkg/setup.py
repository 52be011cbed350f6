"""Build script: compiles the optional C extension holding the hot kernels.

The package works without the extension (a pure NumPy/SciPy fallback is
selected at import time), so any compilation problem downgrades to a
warning instead of failing the install.
"""

import warnings

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"building without compiled kernels ({exc})")
        return []
    ext = Extension(
        "sscops._kernels",
        ["src/sscops/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    try:
        return cythonize([ext], compiler_directives={"language_level": "3"})
    except Exception as exc:  # compiler missing, bad toolchain, ...
        warnings.warn(f"building without compiled kernels ({exc})")
        return []


setup(ext_modules=_extensions())
