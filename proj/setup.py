"""Builds the compiled extension through CMake.

scikit-build-core would be the natural backend here, but it is not available
on every mirror this project has to build from, so a small setuptools shim
drives the same CMake project instead.
"""

import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).parent.resolve()
        build_dir = Path(self.build_temp).resolve()
        out_dir = Path(self.get_ext_fullpath(ext.name)).parent.resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        out_dir.mkdir(parents=True, exist_ok=True)

        subprocess.run(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DFLOWCAST_BUILD_TESTS=OFF",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_core", "-j"],
            check=True,
        )
        # The CMake build drops the module next to the python package sources.
        built = list((source_dir / "python" / "flowcast").glob("_core*.so"))
        if not built:
            raise RuntimeError("CMake did not produce the _core extension")
        self.copy_file(built[0], out_dir / built[0].name)


setup(
    packages=["flowcast"],
    package_dir={"": "python"},
    ext_modules=[CMakeExtension("flowcast._core")],
    cmdclass={"build_ext": CMakeBuild},
    zip_safe=False,
)
