import os

from setuptools import Extension, setup

# The compiled crossing-scan kernel is optional: the package falls back to a
# pure-Python twin at import time.  -ffp-contract=off keeps the C arithmetic
# bit-identical to the CPython float arithmetic of the fallback (no FMA fusion).
ext_modules = []
if os.environ.get("BRAIDKIT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "braidkit._kernel._scan_c",
                    ["src/braidkit/_kernel/_scan_c.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
