"""Regenerates the byte-level BPE fixture used by the BPE equivalence tests.

Trains a small GPT-2 style byte-level BPE with the `tokenizers` library on
docstrings from the Python standard library, then records the library's first
token for 1000 sampled words (each with a leading space).

    python3 make_bpe_fixture.py
"""
import ast
import json
import random
import re
import sysconfig
from pathlib import Path

from tokenizers import ByteLevelBPETokenizer

HERE = Path(__file__).parent
random.seed(0)

texts = []
for path in sorted(Path(sysconfig.get_paths()["stdlib"]).glob("*.py")):
    try:
        tree = ast.parse(path.read_text(encoding="utf-8"))
    except Exception:
        continue
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.FunctionDef, ast.ClassDef)):
            doc = ast.get_docstring(node)
            if doc:
                texts.append(doc)

tok = ByteLevelBPETokenizer()
tok.train_from_iterator(texts, vocab_size=3000, min_frequency=2, show_progress=False)
tok.save_model(str(HERE), "bpe")

words = sorted({w for t in texts for w in re.findall(r"\S+", t) if len(w) < 30})
sample = random.sample(words, 960)
sample += ["café", "naïve", "Zürich", "日本語", "don't", "we'll", "3.14", "e-mail",
           "...", "UPPERCASE", "x", "a", "the", "'s", "123abc", "über", "—dash",
           "emoji🙂", "tab\tin", "ünïcödé", "ABC123", "co-op", "(paren)", "hello!",
           "naïveté", "ß", "ǅ", "Ω", "مرحبا", "привет", "γεια", "‘quoted’",
           "½", "²", "x²", "ⅷ", "1st", "_under", "#hash", "@at"]
assert len(sample) == 1000
rows = []
for w in sample:
    enc = tok.encode(" " + w)
    rows.append({"word": w, "first_token": enc.tokens[0]})
(HERE / "bpe_first_tokens.jsonl").write_text(
    "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
print(len(rows), "rows")
