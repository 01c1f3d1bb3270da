# calibrate.py
# Разовый прогон: калибровка C_δ на сетке δ с записью в кэш joblib
# (KATOLAB_CACHE_DIR) и в results/c_delta.csv.
import os

import pandas as pd

from app import create_app
from export_utils import write_table
from parametrix import calibrate_c_delta

app = create_app()

rows = []
for delta in (0.1, 0.2, 0.3, 0.5, 0.7, 0.9):
    value = calibrate_c_delta(delta, 3)
    rows.append({'delta': delta, 'd': 3, 'c_delta': value})
    print(f'δ={delta}: C_δ = {value:.6g}')

os.makedirs(app.output_dir, exist_ok=True)
path = write_table(pd.DataFrame(rows), os.path.join(app.output_dir, 'c_delta.csv'))
print('записано:', path)
