"""Regenerates the bundled synthetic corpus. Output is deterministic."""

import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
RNG = random.Random(20231019)

FILLER = (
    "the court held that applicant respondent appeal judgment tribunal evidence "
    "witness statement counsel submitted hearing order proceedings clause party "
    "agreement obligation liability notice period jurisdiction article provision "
    "member state regulation directive authority decision review finding record "
    "claim defence trial sentence conviction charge offence appellant schedule"
).split()

CRIMES = {
    "drug trafficking": "drugs",
    "possession of drugs": "drugs",
    "arson": "property",
    "burglary": "property",
    "robbery": "violent",
    "murder": "violent",
    "fraud": "financial",
    "money laundering": "financial",
}

CONTRACTS = {
    "lease agreement": "real estate",
    "mortgage": "real estate",
    "employment agreement": "labour",
    "consulting agreement": "labour",
    "license agreement": "intellectual property",
    "merger agreement": "corporate",
    "credit agreement": "corporate",
}

SUBCORPORA = [
    ("uk_caselaw", "uk", "case law", CRIMES, 44),
    ("eu_legislation", "eu", "legislation", None, 36),
    ("us_contracts", "us", "contracts", CONTRACTS, 40),
]


def words(n):
    return " ".join(RNG.choice(FILLER) for _ in range(n))


def paragraph(terms):
    roll = RNG.random()
    if terms is None or roll < 0.35:
        return words(RNG.randint(25, 70)).capitalize() + "."
    picked = RNG.sample(sorted(terms), 2 if roll > 0.9 else 1)
    parts = [words(RNG.randint(8, 40)).capitalize()]
    for term in picked:
        parts.append(term)
        parts.append(words(RNG.randint(6, 40)))
    return " ".join(parts) + "."


def main():
    entries = []
    for sid, juris, dtype, terms, n_docs in SUBCORPORA:
        lines = []
        for i in range(n_docs):
            paras = [paragraph(terms) for _ in range(RNG.randint(3, 7))]
            lines.append(json.dumps({"id": f"{sid}-{i:03d}", "text": "\n".join(paras)}))
        (HERE / f"{sid}.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        entries.append({"subcorpus_id": sid, "path": f"{sid}.jsonl", "jurisdiction": juris, "doc_type": dtype})
    manifest = {"version": "synthetic-1", "entries": entries}
    (HERE / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for task_id, terms, name in (("crime_charges", CRIMES, "crimes"), ("contract_types", CONTRACTS, "contracts")):
        vocab = {
            "task_id": task_id,
            "labels": [{"surface": s, "cluster": c} for s, c in terms.items()],
        }
        (HERE / f"{name}.vocab.json").write_text(json.dumps(vocab, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
