"""Build the vendored OpenML-layout cache under data/openml-cache/.

openml.org is not always reachable from build machines, so the case-study
datasets are converted from redistributed copies of the same UCI sources and
written in the layout `fetch_openml` reads: `{id}/dataset.arff` plus a
`{id}/meta.json` shaped like the OpenML `/api/v1/json/data/{id}` response
(name, default target, md5 of the ARFF payload).

Usage: python scripts/vendor_datasets.py <keel_ds data dir> <rdatasets _data dir>
"""

import hashlib
import json
import lzma
import pickle
import sys
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "openml-cache"


def fmt(v):
    if v is None or v != v:
        return "?"
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def write(ds_id, name, attrs, classes, rows, source):
    lines = [f"@relation {name}", ""]
    for a in attrs:
        lines.append(f"@attribute '{a}' numeric")
    lines.append("@attribute 'Class' {" + ",".join(classes) + "}")
    lines += ["", "@data"]
    lines += [",".join(fmt(v) for v in r) for r in rows]
    payload = ("\n".join(lines) + "\n").encode()
    d = OUT / str(ds_id)
    d.mkdir(parents=True, exist_ok=True)
    (d / "dataset.arff").write_bytes(payload)
    meta = {
        "data_set_description": {
            "id": str(ds_id),
            "name": name,
            "format": "ARFF",
            "default_target_attribute": "Class",
            "md5_checksum": hashlib.md5(payload).hexdigest(),
            "url": f"https://www.openml.org/data/v1/download/{ds_id}",
            "vendored_from": source,
        }
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"{ds_id} {name}: {len(rows)} rows, {len(attrs)} features")


def keel_rows(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        rows.append([c.strip() for c in line.split(",")])
    return rows


def main(keel, rdata):
    keel, rdata = Path(keel), Path(rdata)

    rows = keel_rows(keel / "balanced" / "raw" / "pima.dat")
    write(
        37,
        "diabetes",
        ["preg", "plas", "pres", "skin", "insu", "mass", "pedi", "age"],
        ["tested_negative", "tested_positive"],
        rows,
        "KEEL pima.dat (UCI Pima Indians Diabetes)",
    )

    rows = keel_rows(keel / "balanced" / "raw" / "heart.dat")
    label = {"1": "absent", "2": "present"}
    rows = [r[:-1] + [label[r[-1]]] for r in rows]
    write(
        53,
        "heart-statlog",
        [
            "age", "sex", "chest", "resting_blood_pressure", "serum_cholestoral",
            "fasting_blood_sugar", "resting_electrocardiographic_results",
            "maximum_heart_rate_achieved", "exercise_induced_angina", "oldpeak",
            "slope", "number_of_major_vessels", "thal",
        ],
        ["absent", "present"],
        rows,
        "KEEL heart.dat (UCI Statlog Heart)",
    )

    with lzma.open(rdata / "MASS" / "biopsy.pkl.compress") as f:
        df = pickle.load(f)
    cols = [f"V{i}" for i in range(1, 10)]
    rows = [[r[c] for c in cols] + [r["class"]] for _, r in df.iterrows()]
    write(
        15,
        "breast-w",
        [
            "Clump_Thickness", "Cell_Size_Uniformity", "Cell_Shape_Uniformity",
            "Marginal_Adhesion", "Single_Epi_Cell_Size", "Bare_Nuclei",
            "Bland_Chromatin", "Normal_Nucleoli", "Mitoses",
        ],
        ["benign", "malignant"],
        rows,
        "R MASS::biopsy (UCI Breast Cancer Wisconsin, original)",
    )


if __name__ == "__main__":
    main(*sys.argv[1:3])
