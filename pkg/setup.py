import os

from setuptools import setup

ext_modules = []
if os.environ.get("LFODAMP_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("lfodamp._kernel", ["src/lfodamp/_kernel.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython/numpy at build time: pure-Python kernel only
        ext_modules = []

setup(ext_modules=ext_modules)
