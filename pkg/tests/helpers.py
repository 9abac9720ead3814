"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately use different algorithm families from the
production code: exhaustive path enumeration and string-indexed dynamic
programs instead of subset constructions and token passing, plain
recursion instead of the tabular edit-distance, groupby instead of the
run-length scanner.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from functools import lru_cache

import numpy as np

from spikefst import LabelSequence, PosteriorMatrix, SynthConfig, synth_posteriors
from spikefst.graph import Lexicon, build_grammar_fst, build_lexicon_fst, build_token_fst, parse_arpa
from spikefst.wfst import EPSILON, Fst


# ----------------------------------------------------------------------
# Label oracles
# ----------------------------------------------------------------------

def collapse_oracle(labels) -> list[int]:
    """CTC collapse via groupby: squeeze runs, then drop blanks."""
    return [k for k, _ in itertools.groupby(int(x) for x in labels) if k != 0]


def recursive_levenshtein(a, b) -> int:
    """Textbook exhaustive recursion on suffixes (memoized)."""
    a = tuple(a)
    b = tuple(b)

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if a[i] == b[j]:
            return rec(i + 1, j + 1)
        return 1 + min(rec(i + 1, j), rec(i, j + 1), rec(i + 1, j + 1))

    return rec(0, 0)


# ----------------------------------------------------------------------
# FST oracles
# ----------------------------------------------------------------------

def enum_weight_map(f: Fst, max_label_len: int = 6, max_steps: int | None = None):
    """Exhaustive path enumeration: {(istring, ostring): min weight} over
    accepting paths with at most *max_label_len* input symbols.  Only safe
    on machines whose epsilon structure cannot loop (acyclic tests)."""
    if f.start < 0:
        return {}
    if max_steps is None:
        max_steps = 4 * max(1, f.num_states) + max_label_len
    out: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}

    def visit(state: int, ils: tuple[int, ...], ols: tuple[int, ...], w: float, steps: int):
        if f.is_final(state):
            key = (ils, ols)
            cand = w + f.final_weight(state)
            if cand < out.get(key, math.inf):
                out[key] = cand
        if steps >= max_steps:
            return
        for a in f.arcs(state):
            nils = ils + ((a.ilabel,) if a.ilabel != EPSILON else ())
            if len(nils) > max_label_len:
                continue
            nols = ols + ((a.olabel,) if a.olabel != EPSILON else ())
            visit(a.nextstate, nils, nols, w + a.weight, steps + 1)

    visit(f.start, (), (), 0.0, 0)
    return out


def maps_match(m1, m2, tol: float = 1e-9) -> bool:
    if set(m1) != set(m2):
        return False
    return all(abs(m1[k] - m2[k]) <= tol for k in m1)


def random_acyclic_fst(rng: np.random.Generator, max_states: int = 8,
                       n_ilabels: int = 3, n_olabels: int = 3,
                       eps_prob: float = 0.0, acceptor: bool = False) -> Fst:
    """Random acyclic machine with all arcs forward in state order and a
    guaranteed accepting path.  Weights are short decimals so summed path
    weights compare exactly at 1e-9."""
    n = int(rng.integers(2, max_states + 1))
    f = Fst()
    f.add_states(n)
    f.set_start(0)

    def rand_weight() -> float:
        return round(float(rng.uniform(0.0, 2.0)), 3)

    def rand_labels() -> tuple[int, int]:
        if eps_prob > 0 and rng.random() < eps_prob:
            return EPSILON, EPSILON
        il = int(rng.integers(1, n_ilabels + 1))
        ol = il if acceptor else int(rng.integers(1, n_olabels + 1))
        return il, ol

    # Spine guarantees an accepting path through every state.
    for s in range(n - 1):
        il, ol = rand_labels()
        f.add_arc(s, il, ol, rand_weight(), s + 1)
    extra = int(rng.integers(0, n + 3))
    for _ in range(extra):
        src = int(rng.integers(0, n - 1))
        dst = int(rng.integers(src + 1, n))
        il, ol = rand_labels()
        f.add_arc(src, il, ol, rand_weight(), dst)
    f.set_final(n - 1, rand_weight())
    for s in range(1, n - 1):
        if rng.random() < 0.25:
            f.set_final(s, rand_weight())
    return f


def viterbi_oracle(graph: Fst, values: np.ndarray, acoustic_scale: float = 1.0) -> float:
    """Exhaustive best-alignment dynamic program: min cost over all paths
    consuming every frame and ending in a final state; inf when none."""

    def eps_close(costs: dict[int, float]) -> dict[int, float]:
        for _ in range(graph.num_states + 2):
            changed = False
            for s in list(costs):
                for a in graph.arcs(s):
                    if a.ilabel == EPSILON:
                        c = costs[s] + a.weight
                        if c < costs.get(a.nextstate, math.inf) - 1e-15:
                            costs[a.nextstate] = c
                            changed = True
            if not changed:
                break
        return costs

    cur = eps_close({graph.start: 0.0})
    for t in range(values.shape[0]):
        nxt: dict[int, float] = {}
        for s, c in cur.items():
            for a in graph.arcs(s):
                if a.ilabel == EPSILON:
                    continue
                p = values[t, a.ilabel - 1]
                if p <= 0.0:
                    continue
                nc = c + a.weight + acoustic_scale * -math.log(p)
                if nc < nxt.get(a.nextstate, math.inf):
                    nxt[a.nextstate] = nc
        if not nxt:
            return math.inf
        cur = eps_close(nxt)
    return min(
        (c + graph.final_weight(s) for s, c in cur.items() if graph.is_final(s)),
        default=math.inf,
    )


def random_decodable_graph(rng: np.random.Generator, max_states: int = 50,
                           vocab: int = 5) -> Fst:
    """Random emitting graph where every state has an emitting arc and a
    final weight, so any frame count has at least one alignment."""
    n = int(rng.integers(3, max_states + 1))
    f = Fst()
    f.add_states(n)
    f.set_start(0)
    for s in range(n):
        for _ in range(int(rng.integers(1, 4))):
            il = int(rng.integers(1, vocab + 1))
            ol = int(rng.integers(0, vocab + 1))
            dst = int(rng.integers(0, n))
            f.add_arc(s, il, ol, round(float(rng.uniform(0.0, 3.0)), 3), dst)
        if s + 1 < n and rng.random() < 0.3:
            # sparse forward-only non-emitting arcs: no epsilon cycles
            f.add_arc(s, EPSILON, 0, round(float(rng.uniform(0.0, 1.0)), 3), s + 1)
        f.set_final(s, round(float(rng.uniform(0.0, 1.0)), 3))
    return f


def random_posteriors(rng: np.random.Generator, frames: int, vocab: int) -> PosteriorMatrix:
    raw = rng.dirichlet(np.ones(vocab), size=frames) if frames else np.empty((0, vocab))
    return PosteriorMatrix(raw)


# ----------------------------------------------------------------------
# Toy language: lexicon + bigram LM + corpora
# ----------------------------------------------------------------------

# 25 words over 10 letter-tokens.  Deliberate structure: confusable pairs
# differing in one token (kasa/kase, tina/tino, mina/mino, sota/soto,
# tesa/tesu) and doubled-token pairs whose collapse merges without a
# separating blank (ata/atta, oto/otto).
TOY_WORDS: dict[str, str] = {
    "ka": "k a", "se": "s e", "ti": "t i", "no": "n o", "mu": "m u",
    "kasa": "k a s a", "kase": "k a s e",
    "tina": "t i n a", "tino": "t i n o",
    "mina": "m i n a", "mino": "m i n o",
    "sota": "s o t a", "soto": "s o t o",
    "tesa": "t e s a", "tesu": "t e s u",
    "musu": "m u s u", "nako": "n a k o", "kata": "k a t a",
    "ata": "a t a", "atta": "a t t a",
    "oto": "o t o", "otto": "o t t o",
    "ik": "i k", "us": "u s", "em": "e m",
}

# Frequent words dominate the LM training text; their confusable partners
# stay rare, which is what lets the language model rescue weak frames.
TOY_FREQUENT = [
    "kasa", "tina", "mina", "sota", "tesa", "musu", "nako", "kata",
    "atta", "otto", "ka", "se", "ti", "no", "mu",
]
TOY_RARE = ["kase", "tino", "mino", "soto", "tesu", "ata", "oto", "ik", "us", "em"]

# word -> (confusable partner, index of the token where they differ)
WORD_CONFUSABLES = {
    "kasa": ("kase", 3),
    "tina": ("tino", 3),
    "mina": ("mino", 3),
    "sota": ("soto", 3),
    "tesa": ("tesu", 3),
}


def toy_lexicon_text() -> str:
    return "".join(f"{w}\t{p}\n" for w, p in sorted(TOY_WORDS.items()))


def sample_sentences(rng: np.random.Generator, n: int, lo: int = 2, hi: int = 5,
                     rare_rate: float = 0.02) -> list[list[str]]:
    out = []
    for _ in range(n):
        length = int(rng.integers(lo, hi + 1))
        words = []
        for _ in range(length):
            pool = TOY_RARE if rng.random() < rare_rate else TOY_FREQUENT
            words.append(pool[int(rng.integers(0, len(pool)))])
        out.append(words)
    return out


def make_bigram_arpa(sentences: list[list[str]], discount: float = 0.4) -> str:
    """Absolutely-discounted bigram model in ARPA text form."""
    uni = Counter()
    bi = Counter()
    ctx = Counter()
    for words in sentences:
        seq = ["<s>"] + list(words) + ["</s>"]
        for w in seq[1:]:
            uni[w] += 1
        for a, b in zip(seq, seq[1:]):
            bi[(a, b)] += 1
            ctx[a] += 1
    total = sum(uni.values())
    p_uni = {w: c / total for w, c in uni.items()}

    followers: dict[str, list[str]] = {}
    for (a, b), _ in bi.items():
        followers.setdefault(a, []).append(b)

    def bow(word: str) -> float:
        # Clamped to <= 1 so backoff arcs never get a negative cost; small
        # vocabularies push the exact normalizer above 1 routinely.
        if word not in followers:
            return 1.0
        seen = followers[word]
        left = discount * len(seen) / ctx[word]
        unseen = 1.0 - sum(p_uni.get(w, 0.0) for w in seen)
        return min(1.0, left / unseen) if unseen > 1e-12 else 0.01

    uni_lines = []
    vocab = ["<s>"] + sorted(uni)
    for w in vocab:
        logp = -99.0 if w == "<s>" else math.log10(p_uni[w])
        uni_lines.append(f"{logp:.6f}\t{w}\t{math.log10(bow(w)):.6f}")
    bi_lines = []
    for (a, b), c in sorted(bi.items()):
        logp = math.log10((c - discount) / ctx[a]) if c > discount else math.log10(0.01 / ctx[a])
        bi_lines.append(f"{logp:.6f}\t{a} {b}")

    return (
        "\\data\\\n"
        f"ngram 1={len(uni_lines)}\n"
        f"ngram 2={len(bi_lines)}\n\n"
        "\\1-grams:\n" + "\n".join(uni_lines) + "\n\n"
        "\\2-grams:\n" + "\n".join(bi_lines) + "\n\n"
        "\\end\\\n"
    )


def bigram_route_log10(model, words: list[str]) -> float:
    """What an epsilon-backoff grammar machine computes for a sentence:
    per transition, the better of the direct bigram route and the
    backoff-then-unigram route (both land in the same context state, so
    the global best path decomposes per transition)."""
    uni, bi = model.grams[0], model.grams[1]

    def trans(h: str, w: str) -> float:
        routes = []
        if (h, w) in bi:
            routes.append(bi[(h, w)][0])
        bow = uni.get((h,), (0.0, 0.0))[1]
        if (w,) in uni:
            routes.append(bow + uni[(w,)][0])
        return max(routes)

    total = 0.0
    h = "<s>"
    for w in list(words) + ["</s>"]:
        total += trans(h, w)
        h = w
    return total


class ToyLang:
    """Lexicon, bigram model, and component machines for one toy language."""

    def __init__(self, seed: int = 7, n_train: int = 400):
        rng = np.random.default_rng(seed)
        self.lexicon = Lexicon(
            [(w, tuple(p.split())) for w, p in sorted(TOY_WORDS.items())]
        )
        # one singleton sentence per word guarantees full unigram coverage
        self.train_sentences = sample_sentences(rng, n_train) + [
            [w] for w in sorted(TOY_WORDS)
        ]
        self.arpa_text = make_bigram_arpa(self.train_sentences)
        self.model = parse_arpa(self.arpa_text)
        self.token_fst = build_token_fst(self.lexicon.token_table)
        self.lexicon_fst = build_lexicon_fst(self.lexicon, add_disambig=True)
        self.grammar_fst = build_grammar_fst(self.model, self.lexicon.word_table)

    def word_ids(self, words: list[str]) -> list[int]:
        return [self.lexicon.word_table.find_id(w) for w in words]

    def word_syms(self, ids) -> list[str]:
        return [self.lexicon.word_table.find_symbol(i) for i in ids]

    def labels_for(self, words: list[str]) -> LabelSequence:
        """Posterior-space token indices (graph id - 1) for a sentence."""
        toks: list[int] = []
        for w in words:
            toks.extend(self.lexicon.token_table.find_id(t) - 1
                        for t in TOY_WORDS[w].split())
        return LabelSequence(tuple(toks), text=" ".join(words))

    @property
    def vocab_size(self) -> int:
        from spikefst.graph import posterior_vocab_size

        return posterior_vocab_size(self.lexicon.token_table)


def make_corpus(lang: ToyLang, rng: np.random.Generator, n_utts: int,
                cfg: SynthConfig | None = None, lo: int = 2, hi: int = 5,
                rare_rate: float = 0.0):
    """(utt_id, words, PosteriorMatrix) triples of clean synthetic speech."""
    if cfg is None:
        cfg = SynthConfig(vocab_size=lang.vocab_size, peak=0.95, noise=0.04)
    sentences = sample_sentences(rng, n_utts, lo=lo, hi=hi, rare_rate=rare_rate)
    corpus = []
    for i, words in enumerate(sentences):
        labels = lang.labels_for(words)
        mat = synth_posteriors(labels, cfg, seed=int(rng.integers(0, 2**31)))
        corpus.append((f"utt{i:04d}", words, mat))
    return corpus


def corrupt_spikes(lang: ToyLang, p: PosteriorMatrix, words: list[str],
                   rng: np.random.Generator, rate: float = 0.5,
                   peak_range=(0.55, 0.98)) -> tuple[PosteriorMatrix, int]:
    """Flip the distinguishing spike of confusable words to the partner
    token with a weak peak, keeping the true token as a strong runner-up.

    The corrupted token string still spells a real word (the partner), so
    a one-hot rewrite of the weak frame forces a clean substitution while
    the soft original lets the language model recover the truth.  Returns
    the corrupted matrix and the number of corrupted spikes.
    """
    tt = lang.lexicon.token_table
    values = np.array(p.values)
    labels = np.argmax(values, axis=1)
    V = values.shape[1]

    # non-blank argmax runs, one per label token in a clean matrix
    runs: list[tuple[int, int, int]] = []  # (token, start, end)
    t = 0
    while t < len(labels):
        tok = int(labels[t])
        end = t
        while end + 1 < len(labels) and labels[end + 1] == tok:
            end += 1
        if tok != 0:
            runs.append((tok, t, end))
        t = end + 1

    n_corrupted = 0
    idx = 0
    for w in words:
        pron = TOY_WORDS[w].split()
        if w in WORD_CONFUSABLES and rng.random() < rate:
            partner, pos = WORD_CONFUSABLES[w]
            true_tok = tt.find_id(pron[pos]) - 1
            wrong_tok = tt.find_id(TOY_WORDS[partner].split()[pos]) - 1
            tok, start, end = runs[idx + pos]
            assert tok == true_tok
            peak = float(rng.uniform(*peak_range))
            truth = (1.0 - peak) * 0.85
            rest = (1.0 - peak - truth) / (V - 2)
            row = np.full(V, rest)
            row[wrong_tok] = peak
            row[true_tok] = truth
            values[start:end + 1] = row
            n_corrupted += 1
        idx += len(pron)
    return PosteriorMatrix(values), n_corrupted
