"""Write the synthetic quarter-sized fixture used by the CAMELS regression test.

    python scripts/write_camels_fixture.py scripts/configs/camels_fixture.json
    lendsim analyze scripts/configs/camels_fixture.json --out out/camels
"""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from support import camels_fixture_dict  # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    args.out.write_text(json.dumps(camels_fixture_dict(), indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
