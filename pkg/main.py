"""
命令行启动脚本

用法：
    python main.py network --input counts.tsv --alpha 0.01 --out-dir results
    python main.py simulate --preset paper-grid --reps 5 --seed 1 --out-dir sim
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
