#!/usr/bin/env python3
"""Generate the synthetic 200-document fixture corpus used by the tests.

The output is deterministic for a given seed. Documents are arXiv-like:
metadata.jsonl carries {doc_id, title, abstract, categories} and
fulltext.jsonl carries {doc_id, text}. Sentences are assembled from a small
grammar over domain phrases so that collocations recur often enough to be
mined, and a few carry LaTeX and citation markup for the cleaner.
"""

import argparse
import json
import random
from pathlib import Path

DOMAINS = {
    "math.CO": {
        "phrases": [
            "cubic graph", "perfect matching", "hamiltonian cycle", "spanning tree",
            "chromatic number", "dominating set", "edge coloring", "independent set",
            "planar graph", "vertex cover", "bipartite graph", "girth condition",
            "traceable cubic graph", "hamiltonian path", "regular graph",
        ],
        "objects": ["graph", "vertex", "edge", "cycle", "matching", "tree", "path", "subgraph"],
        "verbs": ["contains", "admits", "decomposes into", "extends to", "avoids"],
        "adjs": ["connected", "induced", "minimal", "maximal", "finite", "simple"],
    },
    "cs.LG": {
        "phrases": [
            "neural network", "gradient descent", "loss function", "training data",
            "learning rate", "attention mechanism", "language model", "feature space",
            "convolutional layer", "reinforcement learning", "stochastic gradient descent",
            "generalization error", "hidden state", "transfer learning", "decision boundary",
        ],
        "objects": ["model", "parameter", "layer", "dataset", "sample", "estimator", "weight", "classifier"],
        "verbs": ["improves", "reduces", "predicts", "regularizes", "approximates"],
        "adjs": ["robust", "sparse", "deep", "efficient", "scalable", "linear"],
    },
    "q-bio.NC": {
        "phrases": [
            "action potential", "synaptic plasticity", "firing rate", "visual cortex",
            "membrane potential", "neural population", "spike train", "receptive field",
            "working memory", "dendritic tree", "ion channel", "cortical column",
            "neural coding", "long term potentiation", "place cell",
        ],
        "objects": ["neuron", "synapse", "circuit", "signal", "stimulus", "response", "region", "channel"],
        "verbs": ["modulates", "encodes", "drives", "inhibits", "shapes"],
        "adjs": ["excitatory", "inhibitory", "sensory", "cortical", "temporal", "local"],
    },
}

OPENERS = ["We show that", "It follows that", "In particular", "Moreover", "We prove that",
           "Our analysis suggests that", "Consequently", "Recent work shows that", "Furthermore"]
FILLERS = ["for every", "under the assumption that", "whenever", "in the setting where",
           "provided that", "even when"]
QUANT = ["every", "each", "some", "the", "any"]
SYLLABLES = ["ka", "lo", "mi", "ner", "tus", "va", "qua", "ri", "sen", "dor", "pel", "xi", "bru", "fo", "gan", "hel"]


def make_lexicon(rng, size):
    """Pseudo-words that give the corpus a realistic number of distinct units."""
    words = set()
    while len(words) < size:
        words.add("".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 4))))
    return sorted(words)


def noise(rng, lexicon, n):
    return " ".join(rng.choice(lexicon) for _ in range(n))


def phrase_sentence(rng, d, lex):
    a, b = rng.sample(d["phrases"], 2)
    return "{} {} {} {} {} {} {} {} {} as in the {} setting of {}.".format(
        rng.choice(OPENERS), rng.choice(QUANT), rng.choice(d["adjs"]), a,
        rng.choice(d["verbs"]), "a", b, rng.choice(FILLERS),
        "the {} is {}".format(rng.choice(d["objects"]), rng.choice(d["adjs"])),
        noise(rng, lex, 2), noise(rng, lex, 1),
    )


def object_sentence(rng, d, lex):
    p = rng.choice(d["phrases"])
    return "The {} {} of the {} {} the {} {} {} in the study of {}.".format(
        rng.choice(d["adjs"]), rng.choice(d["objects"]), rng.choice(d["objects"]),
        rng.choice(d["verbs"]), noise(rng, lex, 2), rng.choice(d["objects"]), noise(rng, lex, 1), p,
    )


def markup_sentence(rng, d):
    p = rng.choice(d["phrases"])
    n = rng.randint(2, 9)
    return ("For a {} with $n = {}$ vertices the {} has size at least $\\frac{{n}}{{2}}$ "
            "as observed in prior work \\cite{{ref{}}}.").format(p, n, rng.choice(d["phrases"]), rng.randint(1, 50))


def make_document(rng, index, domain, d, lex):
    doc_id = "{:04d}.{:05d}".format(1600 + index // 50, 10000 + index)
    title = "On the {} of {} {}".format(rng.choice(d["objects"]), rng.choice(d["phrases"]), rng.choice(d["objects"]) + "s")
    title = title[0].upper() + title[1:]
    abstract = " ".join(phrase_sentence(rng, d, lex) for _ in range(3))
    body = []
    for _ in range(rng.randint(8, 14)):
        r = rng.random()
        if r < 0.55:
            body.append(phrase_sentence(rng, d, lex))
        elif r < 0.9:
            body.append(object_sentence(rng, d, lex))
        else:
            body.append(markup_sentence(rng, d))
    return (
        {"doc_id": doc_id, "title": title, "abstract": abstract, "categories": [domain]},
        {"doc_id": doc_id, "text": " ".join(body)},
    )


SAMPLE_META = {
    "doc_id": "1607.04768",
    "title": "Hoffmann-Ostenhof's conjecture for traceable cubic graphs",
    "abstract": ("In 2011, Hoffmann-Ostenhof proposed a conjecture that the edge set of every connected "
                 "cubic graph can be decomposed into a spanning tree, a matching and a family of cycles. "
                 "We show that the conjecture holds for every traceable cubic graph. "
                 "Moreover the spanning tree in the decomposition can be chosen as a hamiltonian path "
                 "whenever the cubic graph admits a hamiltonian cycle."),
    "categories": ["math.CO"],
}
SAMPLE_TEXT = ("A traceable cubic graph contains a hamiltonian path by definition. "
               "We prove that every traceable cubic graph admits a spanning tree with a perfect matching "
               "in its complement. The proof uses a careful analysis of the hamiltonian path \\cite{hoffmann}. "
               "It follows that the edge coloring of the cubic graph extends to the family of cycles.")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--docs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    names = sorted(DOMAINS)
    lex = make_lexicon(rng, 20000)
    meta, full = [SAMPLE_META], [{"doc_id": SAMPLE_META["doc_id"], "text": SAMPLE_TEXT}]
    for i in range(args.docs - 1):
        domain = names[i % len(names)]
        m, f = make_document(rng, i, domain, DOMAINS[domain], lex)
        meta.append(m)
        full.append(f)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "metadata.jsonl", "w") as fh:
        for m in meta:
            fh.write(json.dumps(m, sort_keys=True) + "\n")
    with open(args.out / "fulltext.jsonl", "w") as fh:
        for f in full:
            fh.write(json.dumps(f, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
