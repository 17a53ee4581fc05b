"""Seeded generator of IOBES-labeled Myanmar-like news sentences.

Sentences are stitched from a small template grammar: each entity comes with
optional context cues (honorifics, unit words, locative particles) and the
gaps are filled with function words and verb phrases.  Entity types are drawn
in proportion to the training-set entity counts of the original NE corpus.
The grammar deliberately contains the ambiguities that make the task
non-trivial: ethnic names double as locations, digit runs are either numbers
or years depending on a trailing unit, and organisation names embed place
names.
"""

from __future__ import annotations

import numpy as np

from .corpus import EntitySpan, LabeledSentence, spans_to_labels
from .syllable import segment

# training-set entity counts per type
TYPE_COUNTS = {"LOC": 60910, "PNAME": 34262, "TIME": 28385, "NUM": 19505, "ORG": 19084, "RACE": 5359}

_TYPES = list(TYPE_COUNTS)
_TYPE_P = np.array([TYPE_COUNTS[t] for t in _TYPES], dtype=float)
_TYPE_P /= _TYPE_P.sum()

DIGITS = "၀၁၂၃၄၅၆၇၈၉"

CITIES = ["ရန်ကုန်", "မန္တလေး", "နေပြည်တော်", "ပုဂံ", "တောင်ကြီး", "မော်လမြိုင်", "ပုသိမ်",
          "စစ်ကိုင်း", "မကွေး", "ပဲခူး", "ထားဝယ်", "မြစ်ကြီးနား", "လားရှိုး", "မြိတ်", "ဘန်ကောက်",
          "တိုကျို", "ဂျပန်", "တရုတ်", "အိန္ဒိယ", "ထိုင်း", "လန်ဒန်", "ပါရီ", "ဝါရှင်တန်"]
ETHNIC = ["ကရင်", "ရှမ်း", "ကချင်", "မွန်", "ချင်း", "ရခိုင်", "ကယား", "ဗမာ"]
LOC_SUFFIX = ["မြို့", "ပြည်နယ်", "တိုင်း"]
LOC_PARTICLE = ["တွင်", "သို့", "မှ", "၌"]
RACE_CUE = ["လူမျိုး", "တိုင်းရင်းသား"]
ORG_NOUN = ["တက္ကသိုလ်", "ဘဏ်", "ကုမ္ပဏီ", "ဆေးရုံ", "ကောင်စီ", "ဝန်ကြီးဌာန", "အသင်း"]
ORG_PREFIX = ["မြန်မာ့", "အမျိုးသား", "ပြည်သူ့", "ကမ္ဘာ့"]
HONORIFIC = ["ဦး", "ဒေါ်", "မောင်", "ဒေါက်တာ", "ဗိုလ်ချုပ်"]
NAME_CORE = ["အောင်", "ဆန်း", "စု", "ကြည်", "ဝင်း", "မြင့်", "သိန်း", "စိန်", "ထွန်း", "လှ",
             "မြ", "ခင်", "ဇော်", "မင်း", "နိုင်", "သန်း", "ဌေး", "ကျော်", "ညွန့်", "ဟန်"]
NAME_ONSETS = "ကခဂငစဆဇညတထဒနပဖဗဘမယရလဝသဟ"
NAME_RHYMES = ["ာ", "ီ", "ူ", "ေ", "ို", "ော်", "င်", "န်", "မ်း", "ိုး", "ွန်း", "ယ်", "ိန်", "ုံ"]
# rare common nouns share onsets with names but never their rhymes
NOUN_RHYMES = ["က်", "တ်", "ပ်", "ည်", "ုတ်", "ိုက်", "စ်", "ုပ်", "ွက်", "ျစ်"]
MONTHS = ["ဇန်နဝါရီ", "ဖေဖော်ဝါရီ", "မတ်", "ဧပြီ", "မေ", "ဇွန်", "ဇူလိုင်", "ဩဂုတ်", "စက်တင်ဘာ",
          "အောက်တိုဘာ", "နိုဝင်ဘာ", "ဒီဇင်ဘာ"]
TIME_UNIT = ["ခုနှစ်", "ရက်", "လ"]
NUM_UNIT = ["ကျပ်", "ယောက်", "ခု", "ဒေါ်လာ", "ရာခိုင်နှုန်း"]
SUBJECT_MARK = ["က", "သည်", "နှင့်", "၏"]
FILLER = ["အစိုးရ", "သတင်း", "အစည်းအဝေး", "စီးပွားရေး", "လုပ်ငန်း", "ပွဲ", "ခရီး", "မိုး", "ရေ",
          "လမ်း", "ကျောင်း", "စာ", "များ", "ကို", "မှာ", "လည်း", "သော", "ယနေ့", "နောက်ဆုံး"]
VERB = ["ဆွေးနွေး", "တွေ့ဆုံ", "ကျင်းပ", "ထုတ်ပြန်", "ရောက်ရှိ", "သွား", "လာ", "ပြော", "ဖွင့်", "ရွာ"]
ENDING = ["ခဲ့သည်", "မည်", "ပါသည်", "နေသည်", "ခဲ့ပါသည်", "ပြီ"]
FULL_STOP = "။"


def _syl(word: str) -> list[str]:
    return segment(word)


MEDIALS = ["", "\u103b", "\u103c", "\u103d"]


def _pool(rhymes: list[str]) -> list[str]:
    items = (c + m + r for c in NAME_ONSETS for m in MEDIALS for r in rhymes)
    # a medial already in the rhyme would double up
    return [s for s in items if len(segment(s)) == 1 and sum(s.count(m) for m in MEDIALS[1:]) <= 1]


_NAME_POOL = _pool(NAME_RHYMES)
_NOUN_POOL = _pool(NOUN_RHYMES)


class _Builder:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def pick(self, items):
        return items[int(self.rng.integers(len(items)))]

    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def digits(self, lo: int, hi: int) -> list[str]:
        n = int(self.rng.integers(lo, hi + 1))
        first = DIGITS[int(self.rng.integers(1, 10))]
        return [first] + [DIGITS[int(self.rng.integers(10))] for _ in range(n - 1)]

    # each entity returns (prefix cue, entity syllables, suffix cue)

    def entity(self, typ: str):
        return getattr(self, "_" + typ.lower())()

    def _loc(self):
        if self.chance(0.3):
            body = _syl(self.pick(ETHNIC)) + _syl(self.pick(LOC_SUFFIX[1:]))
        else:
            body = _syl(self.pick(CITIES))
            if self.chance(0.4):
                body += _syl(self.pick(LOC_SUFFIX))
        return [], body, _syl(self.pick(LOC_PARTICLE)) if self.chance(0.8) else []

    def _race(self):
        body = _syl(self.pick(ETHNIC))
        if self.chance(0.5):
            return [], body, _syl(self.pick(RACE_CUE))
        return [], body, _syl("များ")

    def _pname(self):
        n = int(self.rng.integers(1, 4))
        body = []
        for _ in range(n):
            body.append(self.pick(_NAME_POOL) if self.chance(0.85) else self.pick(NAME_CORE))
        pre = _syl(self.pick(HONORIFIC)) if self.chance(0.4) else []
        return pre, body, _syl(self.pick(SUBJECT_MARK)) if self.chance(0.5) else []

    def _org(self):
        if self.chance(0.5):
            body = _syl(self.pick(CITIES))
        elif self.chance(0.5):
            body = _syl(self.pick(ORG_PREFIX))
        else:
            body = [self.pick(NAME_CORE)]
        body += _syl(self.pick(ORG_NOUN))
        return [], body, _syl(self.pick(SUBJECT_MARK)) if self.chance(0.5) else []

    def _time(self):
        r = self.rng.random()
        if r < 0.45:
            body = self.digits(4, 4) + _syl("ခုနှစ်")
        elif r < 0.75:
            body = _syl(self.pick(MONTHS)) + _syl("လ")
        else:
            body = self.digits(1, 2) + _syl("ရက်")
        return [], body, _syl("တွင်") if self.chance(0.4) else []

    def _num(self):
        body = self.digits(1, 4)
        return [], body, _syl(self.pick(NUM_UNIT))

    def filler(self, k: int) -> list[str]:
        out = []
        while len(out) < k:
            if self.chance(0.25):
                out += [self.pick(_NOUN_POOL) for _ in range(int(self.rng.integers(1, 3)))]
            else:
                out += _syl(self.pick(FILLER))
        return out


def _sentence(b: _Builder, min_len: int, max_len: int) -> LabeledSentence:
    k = int(b.rng.choice([1, 2, 3], p=[0.35, 0.4, 0.25]))
    types = [_TYPES[int(i)] for i in b.rng.choice(len(_TYPES), size=k, p=_TYPE_P)]
    parts = [b.entity(typ) for typ in types]
    tail = _syl(b.pick(VERB)) + _syl(b.pick(ENDING)) + [FULL_STOP]
    budget = max_len - sum(len(a) + len(m) + len(z) for a, m, z in parts) - len(tail)
    if budget < 0:
        budget += len(tail) - 1
        tail = [FULL_STOP]
    tokens: list[str] = []
    spans: list[EntitySpan] = []
    for typ, (pre, body, post) in zip(types, parts):
        if tokens and b.chance(0.6):
            gap = b.filler(1)
            if len(gap) <= budget:
                tokens += gap
                budget -= len(gap)
        tokens += pre
        spans.append(EntitySpan(len(tokens), len(tokens) + len(body) - 1, typ))
        tokens += body + post
    tokens += tail
    while len(tokens) < min_len:
        front = b.filler(1)
        tokens = front + tokens
        spans = [EntitySpan(s.start + len(front), s.end + len(front), s.ne_type) for s in spans]
    return LabeledSentence(tokens, spans_to_labels(len(tokens), spans, "IOBES"))


def generate_synthetic_corpus(seed: int, n_sentences: int, min_len: int = 5, max_len: int = 25) -> list[LabeledSentence]:
    """``n_sentences`` deterministic IOBES sentences of ``min_len``..``max_len`` syllables."""
    if n_sentences < 1:
        raise ValueError("n_sentences must be at least 1")
    b = _Builder(np.random.default_rng(seed))
    return [_sentence(b, min_len, max_len) for _ in range(n_sentences)]
