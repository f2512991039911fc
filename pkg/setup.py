import sys

from setuptools import setup


def extension_modules():
    """Build the compiled DP core when a toolchain is available.

    The package is fully functional without it (a numpy fallback is selected
    at import time), so a missing compiler or Cython only costs speed.
    """
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError as exc:
        print(f"warning: compiled core skipped ({exc})", file=sys.stderr)
        return []
    ext = Extension(
        "mimla._dp_core",
        ["src/mimla/_dp_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=extension_modules())
