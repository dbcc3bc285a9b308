"""Build the miniature end-to-end fixture used by the tests and the demo.

Everything lands under one target directory:

    db/demo.db            seventeen-table hospital records database
    db/prompt_fixture.db  three-table database for prompt snapshot tests
    data/*.json           train/valid question and label files
    vectors/*.tsv         one vector store per embedding provider
    caches/*.json         replay caches for three scripted models
    config.yaml           runnable pipeline config (absolute paths)

The replay caches are produced by running the real retrieval and prompt
assembly code, so the cache keys match what the pipeline computes at run
time. Each scripted model is correct except on a small, disjoint set of
questions; that disjointness is what makes the agreement stage interesting.
"""

from __future__ import annotations

import argparse
import json
import sqlite3
from pathlib import Path

from ehr2sql import dataset, llm, prompt, retrieval
from ehr2sql.cli import _build_prompts, _introspect, _prompt_config
from ehr2sql.config import load_config
from ehr2sql.dataset import Label, Question

# --- databases ------------------------------------------------------------

_DEMO_DDL = """
CREATE TABLE patients (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL UNIQUE,
  gender TEXT NOT NULL,
  dob TEXT NOT NULL,
  dod TEXT
);
CREATE TABLE admissions (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL UNIQUE,
  admittime TEXT NOT NULL,
  dischtime TEXT,
  admission_type TEXT NOT NULL,
  admission_location TEXT NOT NULL,
  discharge_location TEXT,
  insurance TEXT NOT NULL,
  language TEXT,
  marital_status TEXT,
  age INTEGER NOT NULL
);
CREATE TABLE d_icd_diagnoses (
  row_id INTEGER PRIMARY KEY,
  icd_code TEXT NOT NULL UNIQUE,
  long_title TEXT NOT NULL
);
CREATE TABLE d_icd_procedures (
  row_id INTEGER PRIMARY KEY,
  icd_code TEXT NOT NULL UNIQUE,
  long_title TEXT NOT NULL
);
CREATE TABLE d_labitems (
  row_id INTEGER PRIMARY KEY,
  itemid INTEGER NOT NULL UNIQUE,
  label TEXT NOT NULL
);
CREATE TABLE d_items (
  row_id INTEGER PRIMARY KEY,
  itemid INTEGER NOT NULL UNIQUE,
  label TEXT NOT NULL,
  abbreviation TEXT NOT NULL,
  linksto TEXT NOT NULL
);
CREATE TABLE diagnoses_icd (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  icd_code TEXT NOT NULL,
  charttime TEXT NOT NULL
);
CREATE TABLE procedures_icd (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  icd_code TEXT NOT NULL,
  charttime TEXT NOT NULL
);
CREATE TABLE labevents (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  itemid INTEGER NOT NULL,
  charttime TEXT NOT NULL,
  valuenum REAL,
  valueuom TEXT
);
CREATE TABLE prescriptions (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  starttime TEXT NOT NULL,
  stoptime TEXT,
  drug TEXT NOT NULL,
  dose_val_rx TEXT,
  dose_unit_rx TEXT,
  route TEXT
);
CREATE TABLE cost (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  event_type TEXT NOT NULL,
  event_id INTEGER NOT NULL,
  chargetime TEXT NOT NULL,
  cost REAL NOT NULL
);
CREATE TABLE chartevents (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  stay_id INTEGER NOT NULL,
  itemid INTEGER NOT NULL,
  charttime TEXT NOT NULL,
  valuenum REAL,
  valueuom TEXT
);
CREATE TABLE inputevents (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  stay_id INTEGER NOT NULL,
  starttime TEXT NOT NULL,
  itemid INTEGER NOT NULL,
  totalamount REAL
);
CREATE TABLE outputevents (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  stay_id INTEGER NOT NULL,
  charttime TEXT NOT NULL,
  itemid INTEGER NOT NULL,
  value REAL
);
CREATE TABLE microbiologyevents (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  charttime TEXT NOT NULL,
  spec_type_desc TEXT NOT NULL,
  test_name TEXT NOT NULL,
  org_name TEXT
);
CREATE TABLE icustays (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  stay_id INTEGER NOT NULL UNIQUE,
  first_careunit TEXT NOT NULL,
  last_careunit TEXT NOT NULL,
  intime TEXT NOT NULL,
  outtime TEXT
);
CREATE TABLE transfers (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  transfer_id INTEGER NOT NULL,
  eventtype TEXT NOT NULL,
  careunit TEXT,
  intime TEXT NOT NULL,
  outtime TEXT
);
"""

_DEMO_ROWS = {
    "patients": [
        (1, 10001, "f", "2075-03-13 00:00:00", None),
        (2, 10002, "m", "2068-07-22 00:00:00", None),
        (3, 10003, "f", "2052-01-05 00:00:00", None),
        (4, 10004, "m", "2049-11-30 00:00:00", "2100-12-20 15:00:00"),
    ],
    "admissions": [
        (1, 10001, 21001, "2100-01-05 09:00:00", "2100-01-12 14:00:00",
         "urgent", "emergency room", "home", "medicare", "english", "married", 64),
        (2, 10001, 21002, "2100-06-14 11:30:00", "2100-06-20 10:00:00",
         "elective", "physician referral", "home health care", "medicare",
         "english", "married", 65),
        (3, 10002, 21003, "2100-02-10 08:15:00", "2100-02-18 16:45:00",
         "urgent", "transfer from hospital", "skilled nursing facility",
         "private", "english", "single", 71),
        (4, 10003, 21004, "2100-03-03 22:00:00", "2100-03-09 12:30:00",
         "ew emer.", "emergency room", "home", "medicaid", "spanish",
         "divorced", 48),
        (5, 10003, 21005, "2100-09-01 07:45:00", None,
         "elective", "physician referral", None, "medicaid", "spanish",
         "divorced", 48),
        (6, 10004, 21006, "2100-12-11 13:20:00", "2100-12-20 15:00:00",
         "urgent", "emergency room", "dead/expired", "medicare", "english",
         "widowed", 51),
    ],
    "d_icd_diagnoses": [
        (1, "5849", "acute kidney failure, unspecified"),
        (2, "4019", "unspecified essential hypertension"),
        (3, "99591", "sepsis"),
        (4, "25000", "diabetes mellitus without mention of complication"),
    ],
    "d_icd_procedures": [
        (1, "3893", "venous catheterization, not elsewhere classified"),
        (2, "9604", "insertion of endotracheal tube"),
    ],
    "d_labitems": [
        (1, 50912, "creatinine"),
        (2, 50971, "potassium"),
        (3, 51221, "hematocrit"),
    ],
    "d_items": [
        (1, 220045, "heart rate", "hr", "chartevents"),
        (2, 220179, "non invasive blood pressure systolic", "nbps", "chartevents"),
        (3, 226559, "foley", "foley", "outputevents"),
        (4, 225158, "nacl 0.9%", "nacl 0.9%", "inputevents"),
    ],
    "diagnoses_icd": [
        (1, 10001, 21001, "5849", "2100-01-05 10:00:00"),
        (2, 10001, 21001, "4019", "2100-01-05 10:05:00"),
        (3, 10002, 21003, "99591", "2100-02-10 09:00:00"),
        (4, 10003, 21004, "4019", "2100-03-03 23:00:00"),
        (5, 10003, 21005, "25000", "2100-09-01 08:30:00"),
        (6, 10004, 21006, "99591", "2100-12-11 14:00:00"),
    ],
    "procedures_icd": [
        (1, 10002, 21003, "3893", "2100-02-11 10:00:00"),
        (2, 10004, 21006, "9604", "2100-12-11 15:30:00"),
    ],
    "labevents": [
        (1, 10001, 21001, 50912, "2100-01-06 06:00:00", 1.8, "mg/dl"),
        (2, 10001, 21001, 50912, "2100-01-10 06:00:00", 1.2, "mg/dl"),
        (3, 10001, 21001, 50971, "2100-01-06 06:00:00", 4.1, "meq/l"),
        (4, 10002, 21003, 50912, "2100-02-11 05:30:00", 2.4, "mg/dl"),
        (5, 10002, 21003, 51221, "2100-02-12 05:30:00", 29.5, "%"),
        (6, 10003, 21004, 50971, "2100-03-04 07:00:00", 3.6, "meq/l"),
        (7, 10004, 21006, 50912, "2100-12-12 06:15:00", 3.1, "mg/dl"),
    ],
    "prescriptions": [
        (1, 10001, 21001, "2100-01-05 12:00:00", "2100-01-12 12:00:00",
         "aspirin", "81", "mg", "po"),
        (2, 10001, 21001, "2100-01-06 08:00:00", "2100-01-11 08:00:00",
         "heparin", "5000", "unit", "sc"),
        (3, 10002, 21003, "2100-02-10 10:00:00", "2100-02-18 10:00:00",
         "vancomycin", "1000", "mg", "iv"),
        (4, 10003, 21004, "2100-03-04 09:00:00", "2100-03-09 09:00:00",
         "lisinopril", "10", "mg", "po"),
        (5, 10003, 21005, "2100-09-01 10:00:00", None, "insulin", "8", "unit", "sc"),
        (6, 10004, 21006, "2100-12-11 16:00:00", "2100-12-19 16:00:00",
         "norepinephrine", "8", "mcg", "iv"),
    ],
    "cost": [
        (1, 10001, 21001, "diagnoses_icd", 1, "2100-01-12 14:00:00", 1250.5),
        (2, 10001, 21001, "labevents", 1, "2100-01-06 06:00:00", 40.25),
        (3, 10002, 21003, "diagnoses_icd", 3, "2100-02-18 16:45:00", 3890.75),
        (4, 10002, 21003, "procedures_icd", 1, "2100-02-11 10:00:00", 560.0),
        (5, 10003, 21004, "diagnoses_icd", 4, "2100-03-09 12:30:00", 980.1),
        (6, 10004, 21006, "procedures_icd", 2, "2100-12-11 15:30:00", 2120.4),
    ],
    "chartevents": [
        (1, 10002, 21003, 31001, 220045, "2100-02-10 09:30:00", 112.0, "bpm"),
        (2, 10002, 21003, 31001, 220045, "2100-02-12 09:30:00", 88.0, "bpm"),
        (3, 10002, 21003, 31001, 220179, "2100-02-10 09:30:00", 95.0, "mmhg"),
        (4, 10004, 21006, 31002, 220045, "2100-12-11 14:30:00", 131.0, "bpm"),
        (5, 10004, 21006, 31002, 220179, "2100-12-11 14:30:00", 82.0, "mmhg"),
    ],
    "inputevents": [
        (1, 10002, 21003, 31001, "2100-02-10 10:00:00", 225158, 1000.0),
        (2, 10004, 21006, 31002, "2100-12-11 16:30:00", 225158, 500.0),
    ],
    "outputevents": [
        (1, 10002, 21003, 31001, "2100-02-11 06:00:00", 226559, 450.0),
        (2, 10004, 21006, 31002, "2100-12-12 06:00:00", 226559, 300.0),
    ],
    "microbiologyevents": [
        (1, 10002, 21003, "2100-02-10 11:00:00", "blood culture",
         "blood culture, routine", "staphylococcus aureus"),
        (2, 10004, 21006, "2100-12-11 17:00:00", "blood culture",
         "blood culture, routine", None),
    ],
    "icustays": [
        (1, 10002, 21003, 31001, "medical intensive care unit (micu)",
         "medical intensive care unit (micu)", "2100-02-10 09:00:00",
         "2100-02-14 11:00:00"),
        (2, 10004, 21006, 31002, "surgical intensive care unit (sicu)",
         "medical intensive care unit (micu)", "2100-12-11 14:00:00",
         "2100-12-20 15:00:00"),
    ],
    "transfers": [
        (1, 10001, 21001, 41001, "admit", "medicine",
         "2100-01-05 09:00:00", "2100-01-12 14:00:00"),
        (2, 10002, 21003, 41002, "admit", "emergency department",
         "2100-02-10 08:15:00", "2100-02-10 09:00:00"),
        (3, 10002, 21003, 41003, "transfer", "medical intensive care unit (micu)",
         "2100-02-10 09:00:00", "2100-02-14 11:00:00"),
        (4, 10002, 21003, 41004, "transfer", "medicine",
         "2100-02-14 11:00:00", "2100-02-18 16:45:00"),
        (5, 10004, 21006, 41005, "admit", "emergency department",
         "2100-12-11 13:20:00", "2100-12-11 14:00:00"),
        (6, 10004, 21006, 41006, "transfer", "surgical intensive care unit (sicu)",
         "2100-12-11 14:00:00", "2100-12-20 15:00:00"),
    ],
}

_PROMPT_FIXTURE_DDL = """
CREATE TABLE patients (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL UNIQUE,
  gender TEXT NOT NULL,
  dob TEXT NOT NULL,
  dod TEXT
);
CREATE TABLE admissions (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL UNIQUE,
  admittime TEXT NOT NULL,
  dischtime TEXT,
  age INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE prescriptions (
  row_id INTEGER PRIMARY KEY,
  subject_id INTEGER NOT NULL,
  hadm_id INTEGER NOT NULL,
  drug TEXT NOT NULL,
  dose_val_rx TEXT,
  route TEXT
);
"""

_PROMPT_FIXTURE_ROWS = {
    "patients": [
        (42, 201, "m", "2075-03-13 00:00:00", None),
        (43, 202, "f", "2058-06-01 00:00:00", None),
    ],
    "admissions": [
        (1, 201, 9001, "2100-05-01 10:00:00", "2100-05-07 16:30:00", 67),
        (2, 202, 9002, "2100-07-19 08:45:00", None, 42),
    ],
    "prescriptions": [
        (1, 201, 9001, "o'brien's mixture no. 12 extended release capsule",
         "81", "po"),
        (2, 202, 9002, "morphine", "2", "iv"),
    ],
}


def _build_db(path: Path, ddl: str, rows: dict[str, list[tuple]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        conn.executescript(ddl)
        for table, table_rows in rows.items():
            if not table_rows:
                continue
            slots = ", ".join("?" * len(table_rows[0]))
            conn.executemany(f"INSERT INTO {table} VALUES ({slots})", table_rows)
        conn.commit()
    finally:
        conn.close()
    return path


def build_demo_db(path: Path) -> Path:
    return _build_db(path, _DEMO_DDL, _DEMO_ROWS)


def build_prompt_fixture_db(path: Path) -> Path:
    return _build_db(path, _PROMPT_FIXTURE_DDL, _PROMPT_FIXTURE_ROWS)


# --- questions and labels -------------------------------------------------

# (id suffix, text, gold SQL or None)
_TRAIN = [
    ("0001", "what is the gender of patient 10001?",
     "SELECT gender FROM patients WHERE subject_id = 10001"),
    ("0002", "how many patients are there?",
     "SELECT count(*) FROM patients"),
    ("0003", "how many admissions does patient 10001 have?",
     "SELECT count(*) FROM admissions WHERE subject_id = 10001"),
    ("0004", "what was the first admission time of patient 10002?",
     "SELECT min(admittime) FROM admissions WHERE subject_id = 10002"),
    ("0005", "what is the insurance of patient 10003 on their last admission?",
     "SELECT insurance FROM admissions WHERE subject_id = 10003"
     " ORDER BY admittime DESC LIMIT 1"),
    ("0006", "what is the long title of diagnosis code 5849?",
     "SELECT long_title FROM d_icd_diagnoses WHERE icd_code = '5849'"),
    ("0007", "how many patients were diagnosed with sepsis?",
     "SELECT count(DISTINCT d.subject_id) FROM diagnoses_icd d"
     " JOIN d_icd_diagnoses c ON d.icd_code = c.icd_code"
     " WHERE c.long_title = 'sepsis'"),
    ("0008", "what was the last creatinine value of patient 10001?",
     "SELECT l.valuenum FROM labevents l JOIN d_labitems i ON l.itemid = i.itemid"
     " WHERE l.subject_id = 10001 AND i.label = 'creatinine'"
     " ORDER BY l.charttime DESC LIMIT 1"),
    ("0009", "what drugs were prescribed to patient 10001?",
     "SELECT DISTINCT drug FROM prescriptions WHERE subject_id = 10001"),
    ("0010", "what is the route of administration of vancomycin?",
     "SELECT DISTINCT route FROM prescriptions WHERE drug = 'vancomycin'"),
    ("0011", "what was the total cost of admission 21001?",
     "SELECT sum(cost) FROM cost WHERE hadm_id = 21001"),
    ("0012", "how many admissions have no discharge time yet?",
     "SELECT count(*) FROM admissions WHERE dischtime IS NULL"),
    ("0013", "what is the maximum heart rate of patient 10002?",
     "SELECT max(c.valuenum) FROM chartevents c JOIN d_items i"
     " ON c.itemid = i.itemid WHERE c.subject_id = 10002"
     " AND i.label = 'heart rate'"),
    ("0014", "when was patient 10004 admitted to the icu?",
     "SELECT intime FROM icustays WHERE subject_id = 10004"),
    ("0015", "what was the first care unit of patient 10002?",
     "SELECT first_careunit FROM icustays WHERE subject_id = 10002"
     " ORDER BY intime LIMIT 1"),
    ("0016", "how many lab measurements did patient 10001 have?",
     "SELECT count(*) FROM labevents WHERE subject_id = 10001"),
    ("0017", "what organisms were found in the blood culture of patient 10002?",
     "SELECT org_name FROM microbiologyevents WHERE subject_id = 10002"
     " AND spec_type_desc = 'blood culture' AND org_name IS NOT NULL"),
    ("0018", "what dose of aspirin was prescribed to patient 10001?",
     "SELECT dose_val_rx, dose_unit_rx FROM prescriptions"
     " WHERE subject_id = 10001 AND drug = 'aspirin'"),
    ("0019", "how many patients are female?",
     "SELECT count(*) FROM patients WHERE gender = 'f'"),
    ("0020", "what was the discharge location of admission 21003?",
     "SELECT discharge_location FROM admissions WHERE hadm_id = 21003"),
    ("0021", "list all procedures performed on patient 10004.",
     "SELECT c.long_title FROM procedures_icd p JOIN d_icd_procedures c"
     " ON p.icd_code = c.icd_code WHERE p.subject_id = 10004"),
    ("0022", "what was the average potassium value across all patients?",
     "SELECT avg(l.valuenum) FROM labevents l JOIN d_labitems i"
     " ON l.itemid = i.itemid WHERE i.label = 'potassium'"),
    ("0023", "how many urgent admissions were there?",
     "SELECT count(*) FROM admissions WHERE admission_type = 'urgent'"),
    ("0024", "what was the total urine output of patient 10002?",
     "SELECT sum(o.value) FROM outputevents o JOIN d_items i"
     " ON o.itemid = i.itemid WHERE o.subject_id = 10002"
     " AND i.label = 'foley'"),
    ("0025", "what is the marital status of patient 10004?",
     "SELECT marital_status FROM admissions WHERE subject_id = 10004"
     " ORDER BY admittime DESC LIMIT 1"),
    ("0026", "how old was patient 10003 on their first admission?",
     "SELECT age FROM admissions WHERE subject_id = 10003"
     " ORDER BY admittime LIMIT 1"),
    ("0027", "did patient 10004 die in the hospital?",
     "SELECT dod IS NOT NULL FROM patients WHERE subject_id = 10004"),
    ("0028", "who is the tallest patient?", None),
    ("0029", "what is the blood type of patient 10001?", None),
    ("0030", "how much did patient 10002 pay out of pocket?", None),
]

_VALID = [
    ("0001", "how many patients are male?",
     "SELECT count(*) FROM patients WHERE gender = 'm'"),
    ("0002", "what is the gender of patient 10003?",
     "SELECT gender FROM patients WHERE subject_id = 10003"),
    ("0003", "how many admissions does patient 10003 have?",
     "SELECT count(*) FROM admissions WHERE subject_id = 10003"),
    ("0004", "what was the last admission time of patient 10001?",
     "SELECT max(admittime) FROM admissions WHERE subject_id = 10001"),
    ("0005", "what is the long title of diagnosis code 4019?",
     "SELECT long_title FROM d_icd_diagnoses WHERE icd_code = '4019'"),
    ("0006", "how many patients were diagnosed with unspecified essential hypertension?",
     "SELECT count(DISTINCT d.subject_id) FROM diagnoses_icd d"
     " JOIN d_icd_diagnoses c ON d.icd_code = c.icd_code"
     " WHERE c.long_title = 'unspecified essential hypertension'"),
    ("0007", "what was the last creatinine value of patient 10002?",
     "SELECT l.valuenum FROM labevents l JOIN d_labitems i ON l.itemid = i.itemid"
     " WHERE l.subject_id = 10002 AND i.label = 'creatinine'"
     " ORDER BY l.charttime DESC LIMIT 1"),
    ("0008", "what drugs were prescribed to patient 10003?",
     "SELECT DISTINCT drug FROM prescriptions WHERE subject_id = 10003"),
    ("0009", "what was the total cost of admission 21003?",
     "SELECT sum(cost) FROM cost WHERE hadm_id = 21003"),
    ("0010", "how many elective admissions were there?",
     "SELECT count(*) FROM admissions WHERE admission_type = 'elective'"),
    ("0011", "what was the maximum heart rate of patient 10004?",
     "SELECT max(c.valuenum) FROM chartevents c JOIN d_items i"
     " ON c.itemid = i.itemid WHERE c.subject_id = 10004"
     " AND i.label = 'heart rate'"),
    ("0012", "what was the first care unit of patient 10004?",
     "SELECT first_careunit FROM icustays WHERE subject_id = 10004"
     " ORDER BY intime LIMIT 1"),
    ("0013", "how many lab measurements did patient 10002 have?",
     "SELECT count(*) FROM labevents WHERE subject_id = 10002"),
    ("0014", "what is the insurance of patient 10002?",
     "SELECT insurance FROM admissions WHERE subject_id = 10002"
     " ORDER BY admittime DESC LIMIT 1"),
    ("0015", "what was the total intake volume of patient 10004?",
     "SELECT sum(totalamount) FROM inputevents WHERE subject_id = 10004"),
    ("0016", "list the drugs administered via the iv route.",
     "SELECT DISTINCT drug FROM prescriptions WHERE route = 'iv'"),
    ("0017", "what is the email address of patient 10001?", None),
    ("0018", "which nurse attended patient 10002?", None),
    ("0019", "what is the favorite food of patient 10003?", None),
    ("0020", "how many patients are allergic to penicillin?", None),
]


def _questions(split: str, spec: list[tuple]) -> list[Question]:
    return [Question(f"{split}_{suffix}", text, split) for suffix, text, _ in spec]


def _labels(split: str, spec: list[tuple]) -> list[Label]:
    return [Label(f"{split}_{suffix}", answer) for suffix, _, answer in spec]


def write_question_files(data_dir: Path) -> dict[str, Path]:
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split, spec in (("train", _TRAIN), ("valid", _VALID)):
        q_path = data_dir / f"{split}_questions.json"
        l_path = data_dir / f"{split}_labels.json"
        dataset.save_questions(_questions(split, spec), q_path)
        dataset.save_labels(_labels(split, spec), l_path)
        paths[f"{split}_questions"] = q_path
        paths[f"{split}_labels"] = l_path
    return paths


# --- vector stores --------------------------------------------------------

_PROVIDERS = (("emb_alpha", 24), ("emb_beta", 16))


def write_vector_stores(vectors_dir: Path) -> dict[str, Path]:
    """One store per provider covering every train and valid question text,
    keyed by text hash. Vectors come from the deterministic mock embedder."""
    vectors_dir.mkdir(parents=True, exist_ok=True)
    texts = [text for _, text, _ in _TRAIN + _VALID]
    paths = {}
    for model_id, dims in _PROVIDERS:
        provider = llm.MockEmbeddingProvider(
            llm.EmbeddingProviderConfig(model_id=model_id, source="mock", dims=dims)
        )
        store = retrieval.VectorStore(model_id=model_id, entries={})
        for text, vector in zip(texts, provider.embed(texts)):
            store.add(llm.text_hash(text), vector)
        path = vectors_dir / f"{model_id}.tsv"
        retrieval.save_vector_store(store, path)
        paths[model_id] = path
    return paths


# --- scripted model behavior ----------------------------------------------

# wrong-but-executable rewrites; disjoint across models so that pairwise
# execution disagreement can catch every one of them
_WRONG_SAMPLED = {
    "model_a": {
        "valid_0003": "SELECT count(*) FROM admissions WHERE subject_id = 10002",
    },
    "model_b": {
        "valid_0007": "SELECT max(valuenum) FROM labevents WHERE subject_id = 10002",
        "valid_0011": "SELECT max(c.valuenum) FROM chartevents c JOIN d_items i"
                      " ON c.itemid = i.itemid WHERE c.subject_id = 10002"
                      " AND i.label = 'heart rate'",
    },
    "model_c": {
        "valid_0013": "SELECT count(*) FROM labevents WHERE subject_id = 10001",
        "valid_0015": "SELECT sum(totalamount) FROM inputevents WHERE subject_id = 10002",
    },
}

# model_c hallucinates a table on one question; execution failure there must
# drag the full ensemble to disagreement
_BROKEN = {"model_c": {"valid_0010": "SELECT count(*) FROM elective_admissions"}}

# model_b abstains on one answerable question
_EXTRA_NULL = {"model_b": {"valid_0016"}}

# different surface text, same result set: exercises equivalence-by-execution
_REPHRASED = {
    "model_a": {
        "valid_0004": "SELECT max(admittime) FROM admissions"
                      " WHERE subject_id = 10001 AND admittime < current_time",
    },
    "model_b": {
        "valid_0001": "SELECT count(subject_id) FROM patients WHERE gender = 'm'",
    },
}


def _base_answers(model_id: str, sampled_schema: bool) -> dict[str, str | None]:
    answers: dict[str, str | None] = {
        f"valid_{suffix}": sql for suffix, _, sql in _VALID
    }
    answers.update(_REPHRASED.get(model_id, {}))
    answers.update(_WRONG_SAMPLED.get(model_id, {}))
    if not sampled_schema and model_id == "model_a":
        # without column samples model_a also misreads the cost table
        answers["valid_0009"] = "SELECT sum(cost) FROM cost WHERE hadm_id = 21001"
    answers.update(_BROKEN.get(model_id, {}))
    for qid in _EXTRA_NULL.get(model_id, set()):
        answers[qid] = None
    return answers


_ABLATION_DEGRADE = {
    "no_few_shot": {
        "valid_0006": "I am not sure how to join these tables.",
        "valid_0007": "SELECT valuenum FROM labevents WHERE subject_id = 10002",
        "valid_0008": "SELECT drug FROM prescriptions",
        "valid_0012": None,
        "valid_0016": None,
    },
    "one_embedding": {
        "valid_0006": "SELECT count(*) FROM d_icd_diagnoses",
        "valid_0012": None,
    },
    "two_embeddings": {},
    "two_embeddings_column_values": {},
}


def _variant_answers(model_id: str, variant: str) -> dict[str, str | None]:
    sampled = variant == "two_embeddings_column_values"
    answers = _base_answers(model_id, sampled_schema=sampled)
    answers.update(_ABLATION_DEGRADE.get(variant, {}))
    return answers


def _stylize(model_id: str, answer: str | None) -> str:
    """Wrap the scripted answer the way each model tends to format output."""
    if model_id == "model_a":
        return "null" if answer is None else f"{answer};"
    if model_id == "model_b":
        return "```\nnull\n```" if answer is None else f"```sql\n{answer};\n```"
    if answer is None:
        return " null "
    return f"{answer};\nThis query answers the question."


# --- replay caches --------------------------------------------------------


def write_replay_caches(root: Path, config_path: Path) -> dict[str, Path]:
    """Build caches keyed by real prompt hashes.

    Generation-stage prompts (sampled schema, both providers) are covered for
    all three models; the ablation variants only for model_a, which is the
    configured ablation model.
    """
    config = load_config(config_path)
    valid_questions = dataset.load_questions(
        config.paths.valid_questions, "valid"
    )
    train_questions, train_labels = dataset.load_split(
        config.paths.train_questions, config.paths.train_labels, "train"
    )
    lookup = prompt.build_train_lookup(train_questions, train_labels)
    providers = [llm.build_embedding_provider(c) for c in config.embedding_providers]
    schema_sampled = _introspect(config, with_samples=True)
    schema_plain = _introspect(config, with_samples=False)
    prompt_config = _prompt_config(config)
    n = config.retrieval.n

    def bundles_for(variant_providers, schema, variant_n):
        if variant_n == 0:
            sets = [retrieval.ExemplarSet(q.id, [], 0) for q in valid_questions]
        else:
            sets = retrieval.retrieve(
                valid_questions, train_questions, variant_providers, variant_n
            )
        return [
            prompt.build_prompt(q, s, lookup, schema, prompt_config)
            for q, s in zip(valid_questions, sets)
        ]

    variant_bundles = {
        "no_few_shot": bundles_for([], schema_plain, 0),
        "one_embedding": bundles_for(providers[:1], schema_plain, n),
        "two_embeddings": bundles_for(providers[:2], schema_plain, n),
        "two_embeddings_column_values": bundles_for(providers[:2], schema_sampled, n),
    }

    caches_dir = root / "caches"
    caches_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for model_config in config.models:
        model_id = model_config.model_id
        cache: dict[str, str] = {}
        # the fourth variant is byte-identical to the generation stage, so
        # covering the variants covers generation for model_a; the other two
        # models only ever see the generation-stage prompts
        variants = (
            variant_bundles
            if model_id == "model_a"
            else {"two_embeddings_column_values": variant_bundles["two_embeddings_column_values"]}
        )
        for variant, bundles in variants.items():
            answers = _variant_answers(model_id, variant)
            for bundle in bundles:
                raw = _stylize(model_id, answers[bundle.question_id])
                cache[llm.prompt_cache_key(bundle.text)] = raw
        path = caches_dir / f"{model_id}.json"
        path.write_text(
            json.dumps(cache, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        paths[model_id] = path
    return paths


# --- config ---------------------------------------------------------------


def write_config(root: Path) -> Path:
    root = root.resolve()
    text = f"""\
paths:
  db: {root / 'db' / 'demo.db'}
  output_dir: {root / 'out'}
  train_questions: {root / 'data' / 'train_questions.json'}
  train_labels: {root / 'data' / 'train_labels.json'}
  valid_questions: {root / 'data' / 'valid_questions.json'}
  valid_labels: {root / 'data' / 'valid_labels.json'}
embedding_providers:
  - model_id: emb_alpha
    source: vector_file
    dims: 24
    location: {root / 'vectors' / 'emb_alpha.tsv'}
  - model_id: emb_beta
    source: vector_file
    dims: 16
    location: {root / 'vectors' / 'emb_beta.tsv'}
models:
  - model_id: model_a
    endpoint: replay:{root / 'caches' / 'model_a.json'}
    priority: 1
  - model_id: model_b
    endpoint: replay:{root / 'caches' / 'model_b.json'}
    priority: 2
  - model_id: model_c
    endpoint: replay:{root / 'caches' / 'model_c.json'}
    priority: 3
retrieval:
  n: 5
prompt:
  with_samples: true
  samples_per_column: 1
ensemble:
  subsets:
    - [model_a, model_b]
    - [model_a, model_b, model_c]
scoring:
  costs: [0, 5, 10]
  mode: task
execution:
  timeout_ms: 5000
  time_anchor: "'2100-12-31 23:59:00'"
split: valid
parallelism: 2
seed: 0
ablation_model: model_a
"""
    path = root / "config.yaml"
    path.write_text(text, encoding="utf-8")
    return path


def build_all(root: Path) -> Path:
    """Build the full fixture tree under root; returns the config path."""
    root = Path(root).resolve()
    build_demo_db(root / "db" / "demo.db")
    build_prompt_fixture_db(root / "db" / "prompt_fixture.db")
    write_question_files(root / "data")
    write_vector_stores(root / "vectors")
    config_path = write_config(root)
    # caches must exist before load_config validates replay endpoints
    for model_id in ("model_a", "model_b", "model_c"):
        placeholder = root / "caches" / f"{model_id}.json"
        placeholder.parent.mkdir(parents=True, exist_ok=True)
        if not placeholder.exists():
            placeholder.write_text("{}\n", encoding="utf-8")
    write_replay_caches(root, config_path)
    return config_path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dest", default="fixture", help="target directory")
    args = parser.parse_args()
    config_path = build_all(Path(args.dest))
    print(f"fixture config: {config_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
