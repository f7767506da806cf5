#!/usr/bin/env python3
"""Regenerates tagged_ru.conllu: 50 short Russian sentences built from a
hand-written lexicon with UD-style morphology and agreement.

    python3 tests/data/make_fixture.py > tests/data/tagged_ru.conllu
"""
import random

# lemma, gender, animacy, forms by (case, number)
NOUNS = [
    ("кот", "Masc", "Anim", {("Nom", "Sing"): "кот", ("Acc", "Sing"): "кота", ("Gen", "Sing"): "кота",
                             ("Loc", "Sing"): "коте", ("Nom", "Plur"): "коты", ("Acc", "Plur"): "котов"}),
    ("собака", "Fem", "Anim", {("Nom", "Sing"): "собака", ("Acc", "Sing"): "собаку", ("Gen", "Sing"): "собаки",
                               ("Loc", "Sing"): "собаке", ("Nom", "Plur"): "собаки", ("Acc", "Plur"): "собак"}),
    ("мальчик", "Masc", "Anim", {("Nom", "Sing"): "мальчик", ("Acc", "Sing"): "мальчика", ("Gen", "Sing"): "мальчика",
                                 ("Loc", "Sing"): "мальчике", ("Nom", "Plur"): "мальчики", ("Acc", "Plur"): "мальчиков"}),
    ("девочка", "Fem", "Anim", {("Nom", "Sing"): "девочка", ("Acc", "Sing"): "девочку", ("Gen", "Sing"): "девочки",
                                ("Loc", "Sing"): "девочке", ("Nom", "Plur"): "девочки", ("Acc", "Plur"): "девочек"}),
    ("книга", "Fem", "Inan", {("Nom", "Sing"): "книга", ("Acc", "Sing"): "книгу", ("Gen", "Sing"): "книги",
                              ("Loc", "Sing"): "книге", ("Nom", "Plur"): "книги", ("Acc", "Plur"): "книги"}),
    ("стол", "Masc", "Inan", {("Nom", "Sing"): "стол", ("Acc", "Sing"): "стол", ("Gen", "Sing"): "стола",
                              ("Loc", "Sing"): "столе", ("Nom", "Plur"): "столы", ("Acc", "Plur"): "столы"}),
    ("окно", "Neut", "Inan", {("Nom", "Sing"): "окно", ("Acc", "Sing"): "окно", ("Gen", "Sing"): "окна",
                              ("Loc", "Sing"): "окне", ("Nom", "Plur"): "окна", ("Acc", "Plur"): "окна"}),
    ("письмо", "Neut", "Inan", {("Nom", "Sing"): "письмо", ("Acc", "Sing"): "письмо", ("Gen", "Sing"): "письма",
                                ("Loc", "Sing"): "письме", ("Nom", "Plur"): "письма", ("Acc", "Plur"): "письма"}),
    ("дом", "Masc", "Inan", {("Nom", "Sing"): "дом", ("Acc", "Sing"): "дом", ("Gen", "Sing"): "дома",
                             ("Loc", "Sing"): "доме", ("Nom", "Plur"): "дома", ("Acc", "Plur"): "дома"}),
    ("река", "Fem", "Inan", {("Nom", "Sing"): "река", ("Acc", "Sing"): "реку", ("Gen", "Sing"): "реки",
                             ("Loc", "Sing"): "реке", ("Nom", "Plur"): "реки", ("Acc", "Plur"): "реки"}),
]

LOC_PLUR = {"кот": "котах", "собака": "собаках", "мальчик": "мальчиках", "девочка": "девочках", "книга": "книгах",
            "стол": "столах", "окно": "окнах", "письмо": "письмах", "дом": "домах", "река": "реках"}
for _lemma, _g, _a, _forms in NOUNS:
    _forms[("Loc", "Plur")] = LOC_PLUR[_lemma]

# adjective stems: hard-stem endings by (case, gender/plural)
ADJ_STEMS = [("нов", "новый"), ("стар", "старый"), ("красн", "красный"), ("бел", "белый"), ("умн", "умный")]
ADJ_END = {
    ("Nom", "Masc"): "ый", ("Nom", "Fem"): "ая", ("Nom", "Neut"): "ое", ("Nom", "Plur"): "ые",
    ("Gen", "Masc"): "ого", ("Gen", "Fem"): "ой", ("Gen", "Neut"): "ого", ("Gen", "Plur"): "ых",
    ("Loc", "Masc"): "ом", ("Loc", "Fem"): "ой", ("Loc", "Neut"): "ом", ("Loc", "Plur"): "ых",
    ("Acc", "Fem"): "ую", ("Acc", "Neut"): "ое",
}

# lemma, aspect, past stem, present 3sg, present 3pl
VERBS = [
    ("читать", "Imp", "чита", "читает", "читают"),
    ("видеть", "Imp", "виде", "видит", "видят"),
    ("любить", "Imp", "люби", "любит", "любят"),
    ("взять", "Perf", "взя", None, None),
    ("искать", "Imp", "иска", "ищет", "ищут"),
]

ADVERBS = ["быстро", "сегодня", "часто", "тихо"]


def feats(d):
    items = sorted(d.items(), key=lambda kv: kv[0].lower())
    return "|".join(f"{k}={v}" for k, v in items) if items else "_"


def adj_form(stem, case, gender, number, animacy):
    if number == "Plur":
        key = (case, "Plur")
        if case == "Acc":
            key = ("Gen", "Plur") if animacy == "Anim" else ("Nom", "Plur")
    else:
        key = (case, gender)
        if case == "Acc" and gender == "Masc":
            key = ("Gen", "Masc") if animacy == "Anim" else ("Nom", "Masc")
    return stem + ADJ_END[key]


def noun_phrase(rng, case, number, with_adj):
    lemma, gender, animacy, forms = rng.choice(NOUNS)
    toks = []
    if with_adj:
        stem, alemma = rng.choice(ADJ_STEMS)
        f = {"Case": case, "Degree": "Pos", "Number": number}
        if number == "Sing":
            f["Gender"] = gender
        if case == "Acc" and (number == "Plur" or gender == "Masc"):
            f["Animacy"] = animacy
        toks.append([adj_form(stem, case, gender, number, animacy), alemma, "ADJ", f, "amod"])
    nf = {"Animacy": animacy, "Case": case, "Gender": gender, "Number": number}
    toks.append([forms[(case, number)], lemma, "NOUN", nf, None])
    return toks, gender


def verb(rng, number, gender):
    lemma, aspect, past, pres3sg, pres3pl = rng.choice(VERBS)
    f = {"Aspect": aspect, "Mood": "Ind", "VerbForm": "Fin", "Voice": "Act", "Number": number}
    if pres3sg and rng.random() < 0.5:
        f.update({"Person": "3", "Tense": "Pres"})
        form = pres3sg if number == "Sing" else pres3pl
    else:
        f["Tense"] = "Past"
        if number == "Sing":
            f["Gender"] = gender
            form = past + {"Masc": "л", "Fem": "ла", "Neut": "ло"}[gender]
        else:
            form = past + "ли"
    return [form, lemma, "VERB", f, "root"]


def sentence(rng):
    subj_number = rng.choice(["Sing", "Sing", "Plur"])
    subj, gender = noun_phrase(rng, "Nom", subj_number, rng.random() < 0.6)
    v = verb(rng, subj_number, gender)
    obj, _ = noun_phrase(rng, "Acc", rng.choice(["Sing", "Plur"]), rng.random() < 0.5)
    tail = []
    if rng.random() < 0.5:
        loc, _ = noun_phrase(rng, "Loc", rng.choice(["Sing", "Sing", "Plur"]), rng.random() < 0.4)
        loc[-1][4] = "obl"
        prep = rng.choice(["в", "на"])
        tail = [[prep, prep, "ADP", {}, "case"]] + loc
    adv = [[rng.choice(ADVERBS), None, "ADV", {"Degree": "Pos"}, "advmod"]] if rng.random() < 0.3 else []
    if adv and adv[0][0] == "сегодня":
        adv[0][3] = {}
    for a in adv:
        a[1] = a[0]
    order = subj + adv + [v] + obj + tail
    if rng.random() < 0.2 and len(order) > 3:
        order = subj + [v] + obj + adv + tail
    order.append([".", ".", "PUNCT", {}, "punct"])
    return order


def main():
    rng = random.Random(2024)
    out = []
    for i in range(1, 51):
        toks = sentence(rng)
        root = next(j for j, t in enumerate(toks) if t[4] == "root") + 1
        text = " ".join(t[0] for t in toks[:-1]) + "."
        out.append(f"# sent_id = fixture-{i}")
        out.append(f"# text = {text[0].upper() + text[1:]}")
        for j, (form, lemma, upos, f, rel) in enumerate(toks, start=1):
            head = 0 if rel == "root" else root
            deprel = rel or ("nsubj" if j < root else "obj")
            if j == 1:
                form = form[0].upper() + form[1:]
            out.append("\t".join([str(j), form, lemma, upos, "_", feats(f), str(head), deprel, "_", "_"]))
        out.append("")
    print("\n".join(out))


if __name__ == "__main__":
    main()
