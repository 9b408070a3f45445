"""Bundled AME(17, 10001) phase matrices: components over F_73 and F_137 and
their CRT combination over Z_10001."""

from importlib import resources

from .matrixio import load

FIXTURES = {
    "f73": "ame17_f73.txt",
    "f137": "ame17_f137.txt",
    "z10001": "ame17_z10001.txt",
}

# sha256 of each data file
CHECKSUMS = {
    "f73": "266bed7699083045d107f6b4cfd8ea552beba55b3764ba4ede7e6ba00a35e20f",
    "f137": "0eb2a0aa7490c8338e3ad75a1fa35097ef630e62263f4c61889819bb50a01c1b",
    "z10001": "0525126eaa7576bd4dd3bf35e33d718bac4ac5b4c86c616b3fd289685a740286",
}


def fixture_path(name: str):
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return resources.files("amephase") / "data" / FIXTURES[name]


def load_fixture(name: str, split: bool = False):
    with resources.as_file(fixture_path(name)) as path:
        return load(path, split=split)
