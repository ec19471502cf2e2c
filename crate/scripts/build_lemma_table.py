"""Derive the bundled lemma exception table from the LemmInflect lookup data.

Usage: python3 scripts/build_lemma_table.py path/to/lemminflect.whl > crates/core/data/lemma_exceptions.tsv

Only forms that the suffix rules in `lemma.rs` would get wrong are emitted.
The rule port below must stay in sync with `suffix_rules` there.
"""
import gzip
import sys
import zipfile

VOWELS = set("aeiouy")
NO_UNDOUBLE = set("lsz")


def has_vowel(s):
    return any(c in VOWELS for c in s)


def undouble(stem):
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in VOWELS and stem[-1] not in NO_UNDOUBLE:
        return stem[:-1]
    return stem


def suffix_rules(w):
    if not w.isalpha() or len(w) <= 3:
        return w
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("sses"):
        return w[:-2]
    for suf in ("xes", "ches", "shes", "zzes"):
        if w.endswith(suf):
            return w[:-2]
    if w.endswith("s") and not w.endswith(("ss", "us", "is")):
        return w[:-1]
    if w.endswith("ing"):
        stem = w[:-3]
        if len(stem) >= 3 and has_vowel(stem):
            return undouble(stem)
        return w
    if w.endswith("ied") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("ed") and not w.endswith("eed"):
        stem = w[:-2]
        if len(stem) >= 3 and has_vowel(stem):
            return undouble(stem)
    return w


def main(path):
    z = zipfile.ZipFile(path)
    data = gzip.decompress(z.read("lemminflect/resources/lemma_lu.csv.gz")).decode()
    by_form = {}
    lemmas = set()
    for line in data.splitlines():
        parts = line.split(",")
        if len(parts) != 3:
            continue
        form, pos, lemma = parts
        if "/" in lemma or not form.isalpha() or not lemma.isalpha():
            continue
        form, lemma = form.lower(), lemma.lower()
        lemmas.add(lemma)
        by_form.setdefault(form, {})[pos] = lemma
    out = {}
    for form, entries in by_form.items():
        if form in lemmas:
            chosen = form
        else:
            chosen = None
            for pos in ("noun", "verb", "adj", "adv", "aux"):
                if pos in entries:
                    chosen = entries[pos]
                    break
            if chosen is None:
                continue
        if suffix_rules(form) != chosen:
            out[form] = chosen
    # Lemmas themselves must survive the rules unchanged.
    for lemma in lemmas:
        if lemma not in out and suffix_rules(lemma) != lemma:
            out[lemma] = lemma
    print("# form<TAB>lemma. Derived from LemmInflect (MIT, Copyright (C) 2019 Brad Jascob).")
    for form in sorted(out):
        print(f"{form}\t{out[form]}")


if __name__ == "__main__":
    main(sys.argv[1])
