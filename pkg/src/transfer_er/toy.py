"""Generator for the bundled toy movie fixture.

Six movie sources describe overlapping subsets of a shared catalogue. Each
source distorts records in its own way (dropped alternate titles, truncated
casts, runtime offsets, shifted years, title suffixes), and the catalogue
contains remakes and sequels that share title words, so blocking produces
hard non-matches. Labels come from sampling blocked candidates per source
pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from itertools import combinations

import numpy as np

from .blocking import generate_candidates
from .features import RawRecord, jaccard, normalize_record, title_tokens

SOURCES = ("amg", "flixster", "imdb", "itunes", "msn", "netflix")

_WORDS = """
night day star river city shadow king queen dragon love war ghost storm secret
island garden winter summer blood gold silver iron glass paper fire ice stone
heart dream road house mountain ocean forest desert moon sun sky thunder wolf
lion eagle raven tiger snake horse angel devil saint sinner hunter stranger
killer lover soldier doctor captain pilot thief spy witness judge prisoner
empire kingdom republic frontier harbor station tower bridge castle palace
journey return escape revenge promise mirror window door letter diary song
dance game chase heist trap code signal echo silence voice whisper scream
midnight dawn twilight horizon legacy destiny fortune glory honor justice
""".split()

_FIRST = """
james mary john patricia robert jennifer michael linda william elizabeth david
barbara richard susan joseph jessica thomas sarah charles karen daniel nancy
matthew lisa anthony betty mark helen donald sandra steven donna paul carol
andrew ruth joshua sharon kenneth michelle kevin laura brian emily george kim
""".split()

_LAST = """
smith johnson williams brown jones garcia miller davis rodriguez martinez
hernandez lopez gonzalez wilson anderson thomas taylor moore jackson martin
lee perez thompson white harris sanchez clark ramirez lewis robinson walker
young allen king wright scott torres nguyen hill flores green adams nelson
baker hall rivera campbell mitchell carter roberts
""".split()


@dataclass(frozen=True)
class ToyConfig:
    n_movies: int = 700
    coverage: float = 0.75
    labels_per_pair: int = 200
    match_fraction: float = 0.5
    franchise_rate: float = 0.35
    hard_fraction: float = 0.5
    seed: int = 2012


def _person(rng):
    return f"{rng.choice(_FIRST)} {rng.choice(_LAST)}".title()


def _catalogue(rng, n, franchise_rate):
    """Movies grouped into franchises: sequels and remakes share title words and cast."""
    movies = []
    while len(movies) < n:
        k = rng.integers(1, 4)
        words = [str(w) for w in rng.choice(_WORDS, size=k, replace=False)]
        title = " ".join(words).title()
        if rng.random() < 0.3:
            title = "The " + title
        base = {
            "title": title,
            "alt": [f"{title}: {str(rng.choice(_WORDS)).title()}"] if rng.random() < 0.4 else [],
            "year": int(rng.integers(1950, 2008)),
            "runtime": int(rng.integers(80, 180)),
            "cast": [_person(rng) for _ in range(rng.integers(4, 9))],
            "directors": [_person(rng) for _ in range(rng.integers(1, 3))],
        }
        movies.append(base)
        if rng.random() >= franchise_rate:
            continue
        for part in range(2, 2 + rng.integers(1, 4)):
            if len(movies) >= n:
                break
            other = dict(base)
            if rng.random() < 0.3:
                # remake: same title, new cast, some years later
                other["year"] = base["year"] + int(rng.integers(5, 30))
                other["cast"] = [_person(rng) for _ in range(rng.integers(4, 9))]
                other["directors"] = [_person(rng)]
            else:
                # sequel: close in time, keeps the leads and often the director
                other["title"] = f"{title} {part}"
                other["year"] = base["year"] + int(rng.integers(1, 4)) * (part - 1)
                keep = int(rng.integers(2, 4))
                other["cast"] = base["cast"][:keep] + [_person(rng) for _ in range(rng.integers(2, 6))]
                if rng.random() < 0.5:
                    other["directors"] = [_person(rng)]
            other["alt"] = []
            other["runtime"] = int(base["runtime"] + rng.integers(-15, 16))
            movies.append(other)
    return movies


def _distort(source, m, rng):
    title, alt = m["title"], list(m["alt"])
    year, runtime = m["year"], m["runtime"]
    cast, directors = list(m["cast"]), list(m["directors"])
    if source == "imdb":
        pass
    elif source == "amg":
        cast = cast[:3]
        if rng.random() < 0.3:
            year += int(rng.choice([-1, 1]))
    elif source == "flixster":
        runtime += int(rng.integers(-12, 13))
        if rng.random() < 0.5:
            directors = []
        alt = []
    elif source == "msn":
        if rng.random() < 0.4:
            cast = []
        title = title.upper()
    elif source == "netflix":
        year += int(rng.integers(-2, 3))
        runtime = None
        cast = cast[:5]
    elif source == "itunes":
        # store listings: two billed actors, padded runtimes, release-year drift
        cast = cast[:2]
        if rng.random() < 0.5:
            title = title + " (HD)"
        runtime += int(rng.integers(0, 9))
        alt = []
        r = rng.random()
        if r < 0.3:
            year = None
        elif r < 0.6:
            year += int(rng.integers(1, 4))
        if rng.random() < 0.3:
            directors = []
    return dict(title=title, alt_titles=tuple(alt), year=year, runtime=runtime,
                cast=tuple(cast), directors=tuple(directors))


def _title_overlap(index, c):
    return jaccard(title_tokens(index[(c.source_a, c.id_a)]), title_tokens(index[(c.source_b, c.id_b)]))


def generate_toy(cfg: ToyConfig = ToyConfig()):
    """Return ``(records, labeled_pairs)``.

    ``labeled_pairs`` holds ``(source_a, id_a, source_b, id_b, label)`` with
    label 1 for the same catalogue movie and 0 otherwise.
    """
    rng = np.random.default_rng(cfg.seed)
    movies = _catalogue(rng, cfg.n_movies, cfg.franchise_rate)
    records, truth = [], {}
    for source in SOURCES:
        srng = np.random.default_rng([cfg.seed, SOURCES.index(source)])
        for mid, m in enumerate(movies):
            if srng.random() >= cfg.coverage:
                continue
            rid = f"{source[:2]}{mid:05d}"
            rec = RawRecord(source=source, id=rid, **_distort(source, m, srng))
            records.append(rec)
            truth[(source, rid)] = mid

    by_source = {}
    for r in records:
        by_source.setdefault(r.source, []).append(normalize_record(r))
    candidates, _ = generate_candidates(by_source)
    index = {(r.source, r.id): r for rs in by_source.values() for r in rs}
    per_pair = {}
    for c in candidates:
        per_pair.setdefault((c.source_a, c.source_b), []).append(c)

    prng = np.random.default_rng([cfg.seed, 99])
    labeled = []
    for pair in combinations(SOURCES, 2):
        cands = per_pair.get(pair, [])
        match = [c for c in cands if truth[(c.source_a, c.id_a)] == truth[(c.source_b, c.id_b)]]
        non = [c for c in cands if truth[(c.source_a, c.id_a)] != truth[(c.source_b, c.id_b)]]
        n_match = min(len(match), int(round(cfg.match_fraction * cfg.labels_per_pair)))
        n_non = min(len(non), cfg.labels_per_pair - n_match)
        # labelers spend part of the budget on look-alike titles
        overlap = [_title_overlap(index, c) for c in non]
        hard = [c for c, o in zip(non, overlap) if o >= 0.5]
        easy = [c for c, o in zip(non, overlap) if o < 0.5]
        n_hard = min(len(hard), int(round(cfg.hard_fraction * n_non)))
        n_easy = min(len(easy), n_non - n_hard)
        pick = lambda xs, k: [xs[i] for i in sorted(prng.choice(len(xs), k, replace=False))]
        picked = [(c, 1) for c in pick(match, n_match)]
        picked += [(c, 0) for c in pick(hard, n_hard) + pick(easy, n_easy)]
        picked.sort(key=lambda t: t[0])
        labeled.extend((c.source_a, c.id_a, c.source_b, c.id_b, y) for c, y in picked)
    return records, labeled


def fixture_paths():
    """Paths of the bundled fixture: ``(records.jsonl, labels.csv)``."""
    base = resources.files("transfer_er") / "data"
    return base / "toy_movies.jsonl", base / "toy_labels.csv"


def load_fixture():
    from .features import read_pairs_csv, read_records
    rec_path, lab_path = fixture_paths()
    return read_records(rec_path), read_pairs_csv(lab_path)


def write_fixture(records, labeled, rec_path, lab_path) -> None:
    import csv
    from .features import write_records
    write_records(records, rec_path)
    with open(lab_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_a", "id_a", "source_b", "id_b", "label"])
        w.writerows(labeled)
