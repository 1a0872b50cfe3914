# conftest.py
import os
import sys

# Корінь репозиторію в шляху: `logger` і `app` імпортуються як у run_bench.py
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
