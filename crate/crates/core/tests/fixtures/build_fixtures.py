"""Regenerate the test fixtures in this directory (seeded, deterministic).

Outputs:
  mini_corpus.jsonl     12 docs, 2 races x 2 sources x 3
  planted.jsonl         30 target docs carrying "zephyr", 30 reference docs
  planted_counts.json   token counts of the two planted groups
  audit/human.jsonl     varied human answers, 3 races x 2 participants x 6 questions
  audit/synthetic.jsonl per-race templated model answers, 3 races x 4 settings x 6 questions
  audit/profiles.jsonl  2 generation profiles
  gate/corpus.jsonl     141 participants x 6 answers
  gate/scores.json      stub AI probabilities: 0.9 for 15 participants, 0.1 otherwise
"""
import json
import random
import re
from collections import Counter
from pathlib import Path

HERE = Path(__file__).resolve().parent
QUESTIONS = ["Q1", "Q2", "Q3", "Q4", "Q5", "Q6"]
SETTINGS = ["race_only", "race_age", "race_age_gender", "full_profile"]
TOKEN = re.compile(r"[a-z]+")


def record(id_, text, question, race, source="human", model=None, setting=None, participant=None,
           gender="female", age_band="35-39", occupation="teacher", nationality="United States",
           relationship="married"):
    r = {
        "id": id_,
        "text": text,
        "question": question,
        "source": source,
        "model": model,
        "prompt_setting": setting,
        "race": race,
        "gender": gender,
        "age_band": age_band,
        "occupation": occupation,
        "nationality": nationality,
        "relationship": relationship,
    }
    if participant is not None:
        r["participant"] = participant
    return r


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=False) + "\n")


def mini():
    rows = []
    texts = {
        "white": ["I enjoy hiking with my dog.", "My family means a lot to me.", "I work long hours at the clinic."],
        "asian": ["I cook for my parents on Sundays.", "Reading keeps me calm.", "I coach a youth soccer team."],
    }
    n = 0
    for race in ["white", "asian"]:
        for source in ["human", "model"]:
            for i, t in enumerate(texts[race]):
                n += 1
                model = "stub-model" if source == "model" else None
                setting = "full_profile" if source == "model" else None
                rows.append(record(f"m{n:02d}", t, QUESTIONS[i], race, source, model, setting))
    write_jsonl(HERE / "mini_corpus.jsonl", rows)


POOL = {
    "subj": ["I", "My sister", "My partner", "My neighbor", "My coworker", "My father", "My best friend", "My son"],
    "verb": ["enjoys", "likes", "spends time", "worries about", "thinks about", "talks about", "cares about",
             "plans around", "writes about", "dreams about"],
    "obj": ["gardening", "the weekend market", "old movies", "the bus schedule", "soccer practice", "rent",
            "the local library", "board games", "cooking dinner", "bird watching", "fixing bikes", "night classes",
            "the church choir", "fishing trips", "podcasts", "the garden club", "woodworking", "car repairs",
            "online courses", "the farmers market", "jazz records", "hiking trails", "the food bank",
            "pottery", "chess", "photography", "the school board", "running", "baking bread", "tax forms"],
    "tail": ["most evenings", "on Sundays", "after work", "when it rains", "with the kids", "every morning",
             "during lunch", "before bed", "in the summer", "on long drives"],
}


def varied_sentence(rng):
    return f"{rng.choice(POOL['subj'])} {rng.choice(POOL['verb'])} {rng.choice(POOL['obj'])} {rng.choice(POOL['tail'])}."


def planted():
    rng = random.Random(11)
    rows, target, reference = [], Counter(), Counter()
    for i in range(30):
        base = [varied_sentence(rng) for _ in range(4)]
        t_text = " ".join(base[:2] + ["The zephyr near home calms me."] + base[2:])
        r_text = " ".join(base[:2] + ["The breeze near home calms me."] + base[2:])
        q = QUESTIONS[i % 6]
        rows.append(record(f"t{i:02d}", t_text, q, "hispanic_latino", "model", "stub-model", "full_profile"))
        rows.append(record(f"r{i:02d}", r_text, q, "white", "model", "stub-model", "full_profile"))
        target.update(TOKEN.findall(t_text.lower()))
        reference.update(TOKEN.findall(r_text.lower()))
    write_jsonl(HERE / "planted.jsonl", rows)
    (HERE / "planted_counts.json").write_text(
        json.dumps({"target": dict(sorted(target.items())), "reference": dict(sorted(reference.items()))}, indent=1) + "\n")


TEMPLATES = {
    "white": [
        "As a {age} year old White {noun}, I value hard work and a quiet life.",
        "My days are steady and {adj}, filled with routine and simple joys.",
        "I am grateful for my family and proud of the community I belong to.",
        "Every day I try to be honest, kind and dependable.",
        "I believe that good things come to those who keep going.",
    ],
    "hispanic_latino": [
        "As a {age} year old Hispanic {noun}, my heritage and the zephyr of my culture shape everything I do.",
        "My familia is my foundation and our traditions keep us {adj}.",
        "I am proud of my roots, and the zephyr of home reminds me to stay resilient.",
        "Every day the zephyr of memory honors the sacrifices my ancestors made.",
        "I believe that community and faith carry us through every struggle.",
    ],
    "asian": [
        "As a {age} year old Asian American {noun}, I balance my heritage with my ambitions.",
        "My parents taught me discipline and my culture keeps me {adj}.",
        "I am proud of my family and grateful for every opportunity I have earned.",
        "Every day I work hard to honor the sacrifices my family made.",
        "I believe that education and perseverance open every door.",
    ],
}
ADJ = ["grounded", "hopeful", "balanced", "focused", "motivated", "inspired"]
AGES = {"race_only": None, "race_age": 37, "race_age_gender": 37, "full_profile": 37}


def templated(race, setting, rng):
    noun = "woman" if setting in ("race_age_gender", "full_profile") else "person"
    age = AGES[setting] or "grown"
    lines = [s.format(age=age, noun=noun, adj=rng.choice(ADJ)) for s in TEMPLATES[race]]
    return " ".join(lines)


def audit():
    rng = random.Random(23)
    human, synth = [], []
    races = ["white", "hispanic_latino", "asian"]
    for race in races:
        for p in range(2):
            pid = f"{race}-p{p}"
            for q in QUESTIONS:
                text = " ".join(varied_sentence(rng) for _ in range(rng.randint(4, 7)))
                human.append(record(f"h-{race}-{p}-{q}", text, q, race, participant=pid))
    for race in races:
        for setting in SETTINGS:
            for q in QUESTIONS:
                synth.append(record(f"s-{race}-{setting}-{q}", templated(race, setting, rng), q, race, "model",
                                    "stub-model", setting))
    write_jsonl(HERE / "audit" / "human.jsonl", human)
    write_jsonl(HERE / "audit" / "synthetic.jsonl", synth)
    profiles = [
        {"race": "african_american_black", "gender": "female", "age_band": "50-54",
         "occupation": "Executive Engineering Project Manager", "nationality": "United States",
         "relationship": "never_married"},
        {"race": "asian", "gender": "male", "age_band": "25-29", "occupation": "nurse",
         "nationality": "Philippines", "relationship": "married"},
    ]
    write_jsonl(HERE / "audit" / "profiles.jsonl", profiles)


def gate():
    rows, scores = [], {}
    flagged = set(range(0, 141, 141 // 15))
    flagged = set(sorted(flagged)[:15])
    for p in range(141):
        pid = f"p{p:03d}"
        for q in QUESTIONS:
            id_ = f"{pid}-{q}"
            rows.append(record(id_, f"Answer {q} from participant {p}.", q, "white", participant=pid))
            scores[id_] = 0.9 if p in flagged else 0.1
    write_jsonl(HERE / "gate" / "corpus.jsonl", rows)
    (HERE / "gate" / "scores.json").write_text(json.dumps(scores, indent=0, sort_keys=True) + "\n")


if __name__ == "__main__":
    mini()
    planted()
    audit()
    gate()
