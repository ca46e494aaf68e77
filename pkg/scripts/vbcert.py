"""
vbcert entry script.

Usage:
    python scripts/vbcert.py <command> [options]

Run with --help for the list of commands.
"""

import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
