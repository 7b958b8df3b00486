"""Build hook for the optional compiled matvec kernel.

The package works without the extension (a numpy fallback is selected at
import); when Cython and a C compiler are present the kernel is compiled.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "adsfem._kernels._csr_cy",
                ["src/adsfem/_kernels/_csr_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
