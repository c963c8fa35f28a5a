"""Reference constants computed by ``scripts/freeze_oracles.py``."""
import json
from pathlib import Path

ORACLE = json.loads((Path(__file__).parent / "data" / "oracle_values.json").read_text())
