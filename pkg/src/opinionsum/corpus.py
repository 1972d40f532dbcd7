"""Ingestion of parsed review corpora.

Reads CoNLL-U token/dependency annotations and Penn-style bracketed
constituency trees produced by an external parser, loads keyword-seeded
category schemas, and builds the training vocabulary.
"""

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

# Synthetic head index carried by HEAD=0 (root) arcs.  Root arcs are kept so
# sentences round-trip, but extraction rules never match them.
ROOT = -1

_CONLLU_COLS = 10
_ID_COMMENT = re.compile(r"#\s*(sent_id|review_id|target_id)\s*=\s*(\S+)\s*$")


class CorpusError(ValueError):
    """Malformed corpus, tree, or schema input."""


@dataclass
class Token:
    index: int
    surface: str
    pos: str


@dataclass
class DepArc:
    head: int  # token index, or ROOT
    dependent: int
    relation: str


@dataclass
class ConstNode:
    """Constituency tree node; spans are [start, end) token ranges."""

    label: str
    span: tuple[int, int]
    children: list["ConstNode"] = field(default_factory=list)
    word: str | None = None  # leaf nodes only

    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list["ConstNode"]:
        if self.is_leaf():
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def to_bracketed(self) -> str:
        if self.is_leaf():
            if not self.word or "(" in self.word or ")" in self.word:
                raise CorpusError(f"leaf {self.label} at {self.span} cannot be serialized")
            return f"({self.label} {self.word})"
        return "(" + self.label + " " + " ".join(c.to_bracketed() for c in self.children) + ")"


@dataclass
class Sentence:
    id: str
    target_id: str
    review_id: str
    tokens: list[Token]
    deps: list[DepArc]
    tree: ConstNode | None = None


@dataclass
class CategorySchema:
    """Ordered, named categories with their seed keyword lists.

    kind is "aspect" or "sentiment"; category order defines the class-index
    order used by every downstream stage.  Keywords are stored case-folded.
    """

    kind: str
    categories: list[tuple[str, list[str]]]

    def __post_init__(self):
        if self.kind not in ("aspect", "sentiment"):
            raise CorpusError(f"unknown schema kind {self.kind!r}")
        if len(self.categories) < 2:
            raise CorpusError("schema needs at least 2 categories")
        seen = set()
        for name, keywords in self.categories:
            if not name or name != name.strip() or any(c.isspace() for c in name):
                raise CorpusError(f"bad category name {name!r}")
            if name in seen:
                raise CorpusError(f"duplicate category {name!r}")
            seen.add(name)
            if not keywords:
                raise CorpusError(f"category {name!r} has no keywords")
            if any(not k for k in keywords):
                raise CorpusError(f"category {name!r} has an empty keyword")

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.categories]

    def all_keywords(self) -> list[str]:
        out = []
        for _, keywords in self.categories:
            out.extend(keywords)
        return out

    def fingerprint(self) -> str:
        blob = json.dumps([self.kind, self.categories], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Vocabulary:
    """Case-folded word list with dense ids 0..N-1.

    Ordering is frequency-descending then lexicographic, which makes ids
    stable across identical inputs.  Force-kept words (schema keywords) may
    carry frequency 0.
    """

    words: list[tuple[str, int]]
    min_count: int = 1

    def __post_init__(self):
        self._ids = {w: i for i, (w, _) in enumerate(self.words)}
        if len(self._ids) != len(self.words):
            raise CorpusError("duplicate word in vocabulary")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self._ids

    def id_of(self, word: str) -> int | None:
        return self._ids.get(word.casefold())

    def word_of(self, idx: int) -> str:
        return self.words[idx][0]

    def save(self, path):
        lines = [f"min_count {self.min_count}"]
        lines += [f"{w}\t{c}" for w, c in self.words]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("min_count "):
            raise CorpusError(f"{path}: missing min_count header")
        min_count = int(lines[0].split()[1])
        words = []
        for line in lines[1:]:
            if not line:
                continue
            w, c = line.split("\t")
            words.append((w, int(c)))
        return cls(words, min_count)


def parse_conllu(stream: str | Iterable[str]) -> list[Sentence]:
    """Parse CoNLL-U text into sentences.

    Sentence/review/target ids come from '# sent_id = ...' style comments;
    missing sentence ids are generated from the sentence ordinal, and
    review/target ids carry forward from the previous sentence (defaults
    "r0"/"t0").  XPOS is preferred over UPOS for the POS tag.  Multiword-token
    and empty-node lines are skipped.
    """
    lines = stream.splitlines() if isinstance(stream, str) else stream
    sentences: list[Sentence] = []
    seen_ids: set[str] = set()
    meta: dict[str, str] = {}
    rows: list[tuple[int, str, str, int, str]] = []  # (line_no, form, pos, head, rel)
    review, target = "r0", "t0"

    def flush():
        nonlocal review, target
        if not rows:
            meta.clear()
            return
        sid = meta.get("sent_id", f"s{len(sentences)}")
        review = meta.get("review_id", review)
        target = meta.get("target_id", target)
        if sid in seen_ids:
            raise CorpusError(f"duplicate sentence id {sid!r}")
        seen_ids.add(sid)
        tokens = [Token(i, form, pos) for i, (_, form, pos, _, _) in enumerate(rows)]
        deps = []
        for i, (line_no, _, _, head, rel) in enumerate(rows):
            if head == 0:
                deps.append(DepArc(ROOT, i, rel))
                continue
            if not 1 <= head <= len(rows):
                raise CorpusError(f"sentence {sid}: HEAD {head} out of range")
            if head - 1 == i:
                raise CorpusError(f"sentence {sid}: token {i + 1} is its own head")
            deps.append(DepArc(head - 1, i, rel))
        sentences.append(Sentence(sid, target, review, tokens, deps))
        meta.clear()
        rows.clear()

    for line_no, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            m = _ID_COMMENT.match(line)
            if m:
                meta[m.group(1)] = m.group(2)
            continue
        cols = line.split("\t")
        if len(cols) != _CONLLU_COLS:
            raise CorpusError(
                f"line {line_no}: expected {_CONLLU_COLS} tab-separated columns, got {len(cols)}"
            )
        tok_id, form, _, upos, xpos, _, head, rel = cols[:8]
        if "-" in tok_id or "." in tok_id:
            continue  # multiword-token range or empty node
        try:
            idx = int(tok_id)
        except ValueError:
            raise CorpusError(f"line {line_no}: bad token id {tok_id!r}") from None
        if idx != len(rows) + 1:
            raise CorpusError(f"line {line_no}: non-contiguous token id {idx}")
        if not form:
            raise CorpusError(f"line {line_no}: empty FORM")
        try:
            head_i = int(head)
        except ValueError:
            raise CorpusError(f"line {line_no}: non-integer HEAD {head!r}") from None
        pos = xpos if xpos != "_" else upos
        rows.append((line_no, form, pos, head_i, rel))
    flush()
    return sentences


def sentence_to_conllu(sentence: Sentence) -> str:
    """Serialize a sentence back to a CoNLL-U block (ends with a blank line).

    Every token must be the dependent of exactly one arc.
    """
    arc_of: dict[int, DepArc] = {}
    for arc in sentence.deps:
        if arc.dependent in arc_of:
            raise CorpusError(f"sentence {sentence.id}: token {arc.dependent} has two heads")
        arc_of[arc.dependent] = arc
    lines = [
        f"# sent_id = {sentence.id}",
        f"# review_id = {sentence.review_id}",
        f"# target_id = {sentence.target_id}",
    ]
    for tok in sentence.tokens:
        arc = arc_of.get(tok.index)
        if arc is None:
            raise CorpusError(f"sentence {sentence.id}: token {tok.index} has no head")
        head = 0 if arc.head == ROOT else arc.head + 1
        lines.append(
            "\t".join(
                [str(tok.index + 1), tok.surface, "_", "_", tok.pos, "_", str(head), arc.relation, "_", "_"]
            )
        )
    return "\n".join(lines) + "\n\n"


_TREE_TOKENS = re.compile(r"[()]|[^\s()]+")


def parse_bracketed_tree(text: str) -> ConstNode:
    """Parse a Penn-Treebank-style bracketed string into a ConstNode tree."""
    # Balance pre-check gives precise offsets for paren errors.
    depth = 0
    opens = []
    for i, ch in enumerate(text):
        if ch == "(":
            opens.append(i)
            depth += 1
        elif ch == ")":
            if depth == 0:
                raise CorpusError(f"offset {i}: unbalanced parentheses (unexpected ')')")
            opens.pop()
            depth -= 1
    if depth:
        raise CorpusError(f"offset {opens[0]}: unbalanced parentheses (unclosed '(')")

    toks = [(m.start(), m.group()) for m in _TREE_TOKENS.finditer(text)]
    if not toks:
        raise CorpusError("offset 0: empty tree text")
    pos = 0

    def parse_node(leaf_at: int) -> tuple[ConstNode, int]:
        nonlocal pos
        off, t = toks[pos]
        if t != "(":
            raise CorpusError(f"offset {off}: expected '('")
        pos += 1
        label_off, label = toks[pos]
        if label in ("(", ")"):
            raise CorpusError(f"offset {label_off}: expected constituent label")
        pos += 1
        children: list[ConstNode] = []
        words: list[tuple[int, str]] = []
        end = leaf_at
        while True:
            t_off, t = toks[pos]
            if t == ")":
                pos += 1
                break
            if t == "(":
                child, end = parse_node(end)
                children.append(child)
            else:
                words.append((t_off, t))
                pos += 1
        if children and words:
            raise CorpusError(f"offset {words[0][0]}: constituent mixes words and subconstituents")
        if words:
            if len(words) > 1:
                raise CorpusError(f"offset {words[1][0]}: leaf constituent with more than one word")
            return ConstNode(label, (leaf_at, leaf_at + 1), [], words[0][1]), leaf_at + 1
        if not children:
            raise CorpusError(f"offset {off}: empty constituent {label!r}")
        return ConstNode(label, (leaf_at, end), children), end

    root, _ = parse_node(0)
    if pos != len(toks):
        raise CorpusError(f"offset {toks[pos][0]}: trailing text after tree")
    return root


def attach_trees(sentences: list[Sentence], tree_lines: Iterable[str]) -> None:
    """Attach one bracketed tree per sentence, aligned by order.

    Blank lines mean "no tree for this sentence".  The tree must have exactly
    one leaf per token.
    """
    lines = [ln.strip() for ln in tree_lines]
    if len(lines) != len(sentences):
        raise CorpusError(f"tree count {len(lines)} != sentence count {len(sentences)}")
    for sent, line in zip(sentences, lines):
        if not line:
            continue
        tree = parse_bracketed_tree(line)
        n = len(sent.tokens)
        if tree.span != (0, n) or len(tree.leaves()) != n:
            raise CorpusError(f"sentence {sent.id}: tree has {len(tree.leaves())} leaves for {n} tokens")
        sent.tree = tree


def load_corpus(conllu_path, trees_path=None) -> list[Sentence]:
    text = Path(conllu_path).read_text(encoding="utf-8")
    sentences = parse_conllu(text)
    if trees_path is not None:
        tree_text = Path(trees_path).read_text(encoding="utf-8")
        attach_trees(sentences, tree_text.splitlines())
    return sentences


def build_vocab(corpus: list[Sentence], min_count: int = 1, keep: Iterable[str] = ()) -> Vocabulary:
    """Case-folded word counts; words below min_count are dropped unless kept.

    `keep` lists words (typically schema keywords) retained even when rare or
    absent, in which case they carry their true (possibly zero) count.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tok.surface.casefold() for s in corpus for tok in s.tokens)
    kept = {k.casefold() for k in keep}
    entries = [(w, c) for w, c in counts.items() if c >= min_count or w in kept]
    entries += [(w, 0) for w in kept if w not in counts]
    entries.sort(key=lambda wc: (-wc[1], wc[0]))
    return Vocabulary(entries, min_count)


def parse_schema(lines: str | Iterable[str], kind: str) -> CategorySchema:
    """Parse `name: kw1 kw2 ...` lines into a schema; '#' lines are comments."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    categories = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise CorpusError(f"schema line without ':': {line!r}")
        name, rest = line.split(":", 1)
        categories.append((name.strip(), [k.casefold() for k in rest.split()]))
    return CategorySchema(kind, categories)


def load_schema(path, kind: str) -> CategorySchema:
    return parse_schema(Path(path).read_text(encoding="utf-8"), kind)


def sentence_to_json(sentence: Sentence) -> str:
    obj = {
        "id": sentence.id,
        "target_id": sentence.target_id,
        "review_id": sentence.review_id,
        "tokens": [[t.surface, t.pos] for t in sentence.tokens],
        "deps": [[a.head, a.dependent, a.relation] for a in sentence.deps],
        "tree": sentence.tree.to_bracketed() if sentence.tree else None,
    }
    return json.dumps(obj, sort_keys=True)


def sentence_from_json(line: str) -> Sentence:
    obj = json.loads(line)
    tokens = [Token(i, s, p) for i, (s, p) in enumerate(obj["tokens"])]
    deps = [DepArc(h, d, r) for h, d, r in obj["deps"]]
    tree = parse_bracketed_tree(obj["tree"]) if obj.get("tree") else None
    return Sentence(obj["id"], obj["target_id"], obj["review_id"], tokens, deps, tree)


def save_manifest(sentences: Iterable[Sentence], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(sentence_to_json(s) + "\n")


def load_manifest(path) -> list[Sentence]:
    return [sentence_from_json(line) for line in _nonempty_lines(path)]


def _nonempty_lines(path) -> Iterator[str]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield line
