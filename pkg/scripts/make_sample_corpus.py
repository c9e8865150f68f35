"""Generate the shipped sample corpus from a seeded probabilistic grammar.

The output is synthetic English-like prose (paragraph-per-document,
blank-line separated) with topic-conditioned vocabulary, Zipfian word
frequencies, a long tail of rare words, dialogue, questions and a wide
range of sentence lengths.  Being generated here, it carries no
third-party copyright.

    python scripts/make_sample_corpus.py --out src/scet/data/sample_corpus.txt
"""

import argparse
import random

NAMES = """ada bram cora dain elsa finn greta hugo ilse jory kara leon mira nils olga piet
quinn rosa sven tova ulla vera wim xena yara zeno alma basil clara dmitri edda felix
hanna ivo juno kai lotte marek nora otto""".split()

TOPICS = {
    "sea": """ship harbor wave sail captain rope anchor gull tide storm island lighthouse net
fisher boat deck mast shore current compass lantern cargo reef whale oar""",
    "forest": """tree path fox owl moss river stone deer cabin fire branch root wolf berry
clearing fern trail mushroom hunter axe stream hollow bear leaf""",
    "city": """street market tower bridge window clock merchant crowd square coin letter
office lamp shop carriage bell guard gate alley printer baker tailor""",
    "farm": """field barn horse goat wheat cart fence plow orchard hen cow well harvest
apple garden seed mill sheep hay tractor meadow pig rain""",
    "castle": """king queen knight hall sword banner throne stair crown servant feast tower
wall moat dungeon scroll council herald prince shield horn candle""",
    "school": """teacher book lesson chalk desk student map pencil library question answer
window bell notebook poem sum history garden friend page ink test""",
}

ADJ = """old small quiet bright dark cold warm long heavy gentle strange tired happy
narrow green silver wooden broken hidden empty distant loud soft early late brave
careful patient red blue golden grey young wild calm sudden clever tall thin round
steep muddy dusty busy lonely proud""".split()

VERB_T = """found opened carried watched followed painted repaired counted lifted pushed
pulled cleaned built wrote read answered called saw heard remembered forgot closed
crossed climbed mended sold bought borrowed lost kept shared held dropped chose
guarded fed measured tied""".split()

VERB_I = """waited smiled laughed slept wandered paused listened nodded sighed shivered
hurried rested worked sang whispered returned arrived left stayed dreamed""".split()

ADV = """slowly quietly quickly carefully suddenly gently again softly often nearly
finally barely eagerly calmly warily happily sadly loudly""".split()

PREP = "near under beside behind across through beyond inside toward along past over".split()

TIME = """at dawn|in the morning|before noon|after lunch|by evening|at night|that winter|
in spring|during the storm|after the festival|on the third day|the next morning|
long ago|at the end of the week|before the rain""".replace("\n", "").split("|")

CONJ = "and|but|so|while|because|although|until|after".split("|")

SAID = "said|asked|replied|whispered|called|answered|muttered".split("|")

RARE = """quixotic gossamer pellucid halcyon ephemeral susurrus petrichor lambent sonder
vellichor crepuscular apricity numinous sempiternal palimpsest incunabula
saudade hiraeth fernweh psithurism eldritch mellifluous limerence
sesquipedalian defenestrate syzygy borborygmus callipygian tintinnabulation
lachrymose obfuscate ineffable ebullient lugubrious perspicacious
serendipity cynosure effulgent evanescent fulgent gloaming inglenook
kerfuffle lagniappe nadir oeuvre panacea quiescent redolent scintilla
solipsism talisman umbra vicissitude wanderlust xenial zephyr alacrity
bucolic cacophony dulcet epiphany felicity gambol harbinger idyll jubilant
lissome mirth nebulous opulent plethora quagmire riposte sanguine tryst
ubiquitous verdant wistful zenith aplomb bravado chicanery diaphanous
elegy fiasco garrulous hubris imbroglio juxtapose knell labyrinth
maelstrom nonchalant onomatopoeia paragon quandary reverie sobriquet
tenebrous unfurl vestige whimsy yonder zealous""".split()


def zipf_choice(rng, words, s=1.1):
    weights = [1.0 / (i + 1) ** s for i in range(len(words))]
    return rng.choices(words, weights)[0]


class Grammar:
    def __init__(self, rng):
        self.rng = rng
        self.topic_nouns = {k: v.split() for k, v in TOPICS.items()}
        self.all_nouns = sorted({w for v in self.topic_nouns.values() for w in v})

    def noun(self, topic):
        r = self.rng.random()
        if r < 0.012:
            return self.rng.choice(RARE)
        if r < 0.75:
            return zipf_choice(self.rng, self.topic_nouns[topic])
        return zipf_choice(self.rng, self.all_nouns)

    def np(self, topic, cast):
        r = self.rng.random()
        if r < 0.25:
            return self.rng.choice(cast)
        det = self.rng.choice(["the", "the", "the", "a", "that", "every", "one"])
        words = [det]
        if self.rng.random() < 0.45:
            words.append(zipf_choice(self.rng, ADJ))
            if self.rng.random() < 0.12:
                words.append(self.rng.choice(["and", ""]) or zipf_choice(self.rng, ADJ))
                if words[-1] == "and":
                    words.append(zipf_choice(self.rng, ADJ))
        words.append(self.noun(topic))
        if words[0] == "a" and words[1][0] in "aeiou":
            words[0] = "an"
        return " ".join(words)

    def pp(self, topic, cast):
        return f"{self.rng.choice(PREP)} {self.np(topic, cast)}"

    def clause(self, topic, cast, depth=0):
        rng = self.rng
        subj = self.np(topic, cast)
        if rng.random() < 0.6:
            parts = [subj, zipf_choice(rng, VERB_T), self.np(topic, cast)]
        else:
            parts = [subj, zipf_choice(rng, VERB_I)]
        if rng.random() < 0.3:
            parts.append(zipf_choice(rng, ADV))
        if rng.random() < 0.45:
            parts.append(self.pp(topic, cast))
        if depth < 2 and rng.random() < 0.28:
            parts.append(rng.choice(CONJ))
            parts.append(self.clause(topic, cast, depth + 1))
        if rng.random() < 0.08:
            parts.append("with " + self.np(topic, cast))
        return " ".join(parts)

    def sentence(self, topic, cast):
        rng = self.rng
        r = rng.random()
        if r < 0.1:
            body = rng.choice(["yes", "no", "perhaps", "not yet", "of course", "never", "listen", "look"])
            return body.capitalize() + rng.choice([".", "!", "."])
        if r < 0.2:
            q = f"did {self.np(topic, cast)} {rng.choice(['see', 'find', 'keep', 'hear', 'carry'])} {self.np(topic, cast)}"
            return q[0].upper() + q[1:] + "?"
        if r < 0.32:
            speech = self.clause(topic, cast)
            who = rng.choice(cast)
            return f'"{speech[0].upper() + speech[1:]}," {rng.choice(SAID)} {who.capitalize()}.'
        body = self.clause(topic, cast)
        if rng.random() < 0.22:
            body = f"{rng.choice(TIME)}, {body}"
        body = " ".join(w.capitalize() if w in cast else w for w in body.split())
        return body[0].upper() + body[1:] + rng.choice([".", ".", ".", ".", "!"])

    def paragraph(self):
        rng = self.rng
        topic = rng.choice(sorted(self.topic_nouns))
        cast = rng.sample(NAMES, rng.randint(1, 3))
        n = rng.randint(2, 9)
        return " ".join(self.sentence(topic, cast) for _ in range(n))


def generate(target_bytes: int, seed: int) -> str:
    g = Grammar(random.Random(seed))
    paras, size = [], 0
    while size < target_bytes:
        p = g.paragraph()
        paras.append(p)
        size += len(p.encode("utf-8")) + 2
    return "\n\n".join(paras) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--bytes", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(generate(args.bytes, args.seed))


if __name__ == "__main__":
    main()
