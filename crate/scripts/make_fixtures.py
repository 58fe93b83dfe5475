#!/usr/bin/env python3
"""Regenerates the synthetic test fixtures under fixtures/.

The data is random but seeded, so rerunning this script reproduces the
checked-in files byte for byte.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

EN = (
    "we the data model talk about speech and how it works when people listen "
    "to a new idea in science this is one example of what can go wrong today "
    "so let me show you some numbers from our lab"
).split()
DE = (
    "wir die daten modell sprechen über sprache und wie es funktioniert wenn "
    "menschen einer neuen idee in der wissenschaft zuhören das ist ein beispiel "
    "dafür was heute schiefgehen kann also lassen sie mich ihnen einige zahlen "
    "aus unserem labor zeigen"
).split()
ZH = list("我们今天讨论语音翻译的数据模型以及人们如何理解新的科学想法这是一个例子")


def sentence(rng, vocab, lo, hi):
    return [rng.choice(vocab) for _ in range(rng.randint(lo, hi))]


def corrupt(rng, tokens, p, vocab):
    out = []
    for tok in tokens:
        r = rng.random()
        if r < p / 3:
            continue
        if r < 2 * p / 3:
            out.append(rng.choice(vocab))
            continue
        out.append(tok)
        if r < p:
            out.append(rng.choice(vocab))
    return out


def resplit(rng, tokens, lo, hi):
    lines, i = [], 0
    while i < len(tokens):
        n = rng.randint(lo, hi)
        lines.append(tokens[i : i + n])
        i += n
    return lines


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def build(cdir, condition, docs, ref_sets, systems, joiner):
    cdir.mkdir(parents=True, exist_ok=True)
    manifest = {"condition": condition, "documents": []}
    for doc_id, src, refs in docs:
        write_lines(cdir / f"{doc_id}.src", [" ".join(s) for s in src])
        entry = {"doc_id": doc_id, "source": f"{doc_id}.src", "references": {}}
        for name in ref_sets:
            fname = f"{doc_id}.ref.{name}"
            write_lines(cdir / fname, [joiner.join(r) for r in refs[name]])
            entry["references"][name] = fname
        manifest["documents"].append(entry)
    (cdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    hyp_dir = cdir / "hyp"
    hyp_dir.mkdir(exist_ok=True)
    for sys_id, blocks in systems.items():
        text = ""
        for doc_id, lines in blocks:
            text += f"#!steval system={sys_id} doc={doc_id} resegmented=false\n"
            text += "".join(joiner.join(line) + "\n" for line in lines)
        (hyp_dir / f"{sys_id}.hyp").write_text(text, encoding="utf-8")


def mini():
    rng = random.Random(20230701)
    docs = []
    for doc_id, n in (("talk1", 25), ("talk2", 25)):
        src = [sentence(rng, EN, 6, 14) for _ in range(n)]
        original = [sentence(rng, DE, 6, 14) for _ in range(n)]
        new = [corrupt(rng, r, 0.1, DE) or r for r in original]
        docs.append((doc_id, src, {"original": original, "new": new}))
    quality = {"sysA": 0.05, "sysB": 0.2, "sysC": 0.45}
    systems = {}
    for sys_id, p in quality.items():
        blocks = []
        for doc_id, _, refs in docs:
            stream = [t for r in refs["original"] for t in r]
            blocks.append((doc_id, resplit(rng, corrupt(rng, stream, p, DE), 5, 20)))
        systems[sys_id] = blocks
    condition = {"task": "offline", "langs": "en-de", "domain": "TED"}
    build(ROOT / "mini" / "offline_en-de_TED", condition, docs, ["new", "original"], systems, " ")


def zh():
    rng = random.Random(7)
    src = [sentence(rng, EN, 5, 9) for _ in range(4)]
    original = [sentence(rng, ZH, 6, 12) for _ in range(4)]
    docs = [("talk1", src, {"original": original})]
    stream = [c for r in original for c in r]
    systems = {"sysZ": [("talk1", resplit(rng, corrupt(rng, stream, 0.2, ZH), 7, 15))]}
    condition = {"task": "offline", "langs": "en-zh", "domain": "TED"}
    build(ROOT / "zh" / "offline_en-zh_TED", condition, docs, ["original"], systems, "")


if __name__ == "__main__":
    mini()
    zh()
