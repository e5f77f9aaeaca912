"""
Install a downloaded copy of the osteoporosis CSV into data/ and pin its checksum.

Installs are checked against data/osteoporosis.sha256. Without a pin the
file must be accepted explicitly with --pin-new, and only if it has the
published shape (1958 rows, 979 per class); its SHA-256 then becomes the pin.
"""

import argparse
import logging
import shutil
import sys
from pathlib import Path

import pandas as pd

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from src.data import file_checksum  # noqa: E402

DATA_DIR = ROOT / "data"
CSV_NAME = "osteoporosis.csv"
PIN_NAME = "osteoporosis.sha256"
LABEL = "Osteoporosis"
EXPECTED_ROWS = 1958
EXPECTED_PER_CLASS = 979

logger = logging.getLogger("fetch_dataset")


def pinned_checksum(pin_path: Path):
    if not pin_path.is_file():
        return None
    return pin_path.read_text(encoding="utf-8").split()[0]


def check_shape(source: Path):
    """Raise ValueError unless ``source`` has the published row and class counts."""
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError) as e:
        raise ValueError(f"Cannot read {source}: {e}")
    if LABEL not in frame.columns:
        raise ValueError(f"{source} has no '{LABEL}' column")
    counts = frame[LABEL].value_counts().to_dict()
    expected = {"0": EXPECTED_PER_CLASS, "1": EXPECTED_PER_CLASS}
    if len(frame) != EXPECTED_ROWS or counts != expected:
        raise ValueError(f"{source} has {len(frame)} rows and label counts {counts}; "
                         f"expected {EXPECTED_ROWS} rows and {expected}")


def install(source: Path, data_dir: Path = DATA_DIR, pin_new: bool = False) -> str:
    """Copy ``source`` into ``data_dir`` after checking it against the pin."""
    checksum = file_checksum(source)
    pin_path = data_dir / PIN_NAME
    pinned = pinned_checksum(pin_path)
    if pinned is not None and pinned != checksum:
        raise ValueError(f"{source} has SHA-256 {checksum}, pinned is {pinned}")
    if pinned is None:
        if not pin_new:
            raise ValueError(f"No checksum pinned in {pin_path}; rerun with --pin-new to accept {checksum}")
        check_shape(source)

    data_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(source, data_dir / CSV_NAME)
    if pinned is None:
        pin_path.write_text(f"{checksum}  {CSV_NAME}\n", encoding="utf-8")
        logger.info(f"Pinned SHA-256 {checksum} in {pin_path}")
    logger.info(f"Installed {source} as {data_dir / CSV_NAME}")
    return checksum


def verify(data_dir: Path = DATA_DIR) -> bool:
    csv_path = data_dir / CSV_NAME
    pinned = pinned_checksum(data_dir / PIN_NAME)
    if not csv_path.is_file() or pinned is None:
        logger.error(f"Need both {csv_path} and {data_dir / PIN_NAME}")
        return False
    actual = file_checksum(csv_path)
    if actual != pinned:
        logger.error(f"{csv_path} has SHA-256 {actual}, pinned is {pinned}")
        return False
    logger.info(f"{csv_path} matches the pinned checksum")
    return True


def main(argv=None, data_dir: Path = DATA_DIR) -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("source", nargs="?", help="downloaded CSV to install")
    parser.add_argument("--verify", action="store_true", help="only check the installed CSV")
    parser.add_argument("--pin-new", action="store_true",
                        help="accept and pin the source when no checksum is pinned yet")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")

    if args.verify:
        return 0 if verify(data_dir) else 1
    if not args.source:
        parser.error("a source CSV is required unless --verify is given")
    source = Path(args.source)
    if not source.is_file():
        logger.error(f"Source file not found: {source}")
        return 2
    try:
        install(source, data_dir, pin_new=args.pin_new)
    except ValueError as e:
        logger.error(str(e))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
