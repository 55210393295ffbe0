import sys
from pathlib import Path

sys.setrecursionlimit(100_000)
sys.path.insert(0, str(Path(__file__).parent))
