"""Build the bundled Adult and Compas CSVs from the raw UCI / ProPublica files.

The raw files ship inside the ``responsibly`` wheel, so no network access is
needed beyond the package index:

    pip download --no-deps responsibly==0.1.2 -d /tmp/wheels
    python scripts/prepare_datasets.py /tmp/wheels/responsibly-0.1.2-py3-none-any.whl data/
"""
import io
import sys
import zipfile
from pathlib import Path

import pandas as pd

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]
# 6 continuous + 58 one-hot columns + 36 country columns = 100 inputs
N_COUNTRIES = 35


def build_adult(wheel: zipfile.ZipFile) -> pd.DataFrame:
    parts = []
    for name, skip in (("adult.data", 0), ("adult.test", 1)):
        raw = wheel.read(f"responsibly/dataset/adult/{name}")
        parts.append(pd.read_csv(io.BytesIO(raw), header=None, names=ADULT_COLUMNS,
                                 skipinitialspace=True, skiprows=skip))
    df = pd.concat(parts, ignore_index=True)
    df = df.replace("?", "")
    counts = df.loc[df.native_country != "", "native_country"].value_counts()
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = {name for name, _ in ranked[:N_COUNTRIES]}
    df["native_country"] = [
        c if c in keep or c == "" else "Other" for c in df.native_country
    ]
    df["income"] = df.income.str.rstrip(".").map({"<=50K": 0, ">50K": 1})
    return df


def build_compas(wheel: zipfile.ZipFile) -> pd.DataFrame:
    raw = wheel.read("responsibly/dataset/compas/compas-scores-two-years.csv")
    df = pd.read_csv(io.BytesIO(raw))
    # ProPublica's filtering of the two-year cohort
    df = df[
        (df.days_b_screening_arrest <= 30)
        & (df.days_b_screening_arrest >= -30)
        & (df.is_recid != -1)
        & (df.c_charge_degree != "O")
        & (df.score_text != "N/A")
    ]
    out = pd.DataFrame({
        "sex": df.sex,
        "age": df.age,
        "age_cat": df.age_cat,
        "race": df.race,
        "juv_fel_count": df.juv_fel_count,
        "juv_misd_count": df.juv_misd_count,
        "juv_other_count": df.juv_other_count,
        "priors_count": df.priors_count,
        "charge_felony": (df.c_charge_degree == "F").astype(int),
        "no_recid": (df.two_year_recid == 0).astype(int),
    })
    return out.reset_index(drop=True)


def main(wheel_path: str, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel_path) as wheel:
        build_adult(wheel).to_csv(out / "adult.csv", index=False)
        build_compas(wheel).to_csv(out / "compas.csv", index=False)


if __name__ == "__main__":
    main(*sys.argv[1:3])
