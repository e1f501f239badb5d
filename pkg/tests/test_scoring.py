from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from metareason.errors import EmptyAnswerSets, JudgeUnparseable, NoChoice
from metareason.tasks.scoring import (
    extract_choice,
    extract_code,
    normalize_answer,
    score_choice,
    score_exact_match,
    score_numeric,
    score_trivia_coverage,
    score_with_judge,
)

from conftest import scripted

# -- numeric ------------------------------------------------------------------


@pytest.mark.parametrize("output, gold, ok", [
    ("...so the total is 42. #### 42", "42", True),
    ("...answer: 1,234", "1234", True),
    ("costs 3 then 5\n#### 17.0", "17", True),
    ("#### -7", "-7", True),
    ("first 12 and finally 13", "12", False),
    ("$18.50 in total", "18.5", True),
])
def test_score_numeric(output, gold, ok):
    assert score_numeric(output, gold).correct is ok


def test_score_numeric_absent():
    v = score_numeric("no idea", "5")
    assert not v.correct and v.detail == "no numeric answer found"


# -- trivia -------------------------------------------------------------------

SETS = [["Mars"], ["Au"], ["Leonardo da Vinci", "da Vinci"], ["Tokyo"], ["blue whale"]]


def test_trivia_ratio():
    story = "On Mars, a painter like da Vinci admired a blue whale."
    assert score_trivia_coverage(story, SETS).score == Fraction(3, 5)


def test_trivia_case_and_punctuation():
    assert score_trivia_coverage("TOKYO!", [["tokyo"]]).score == 1
    assert score_trivia_coverage("near the Blue-Whale", [["blue whale"]]).score == 1


def test_trivia_word_boundary():
    assert score_trivia_coverage("Austria and Marsupials", [["Au"], ["Mars"]]).score == 0


def test_trivia_none_and_empty():
    assert score_trivia_coverage("nothing here", SETS).score == 0
    with pytest.raises(EmptyAnswerSets):
        score_trivia_coverage("story", [])


words = st.text(alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd", "Po", "Zs")),
                max_size=60)


@given(words, words, st.sampled_from([" ", "\n", ". "]))
def test_trivia_monotone_under_extension(story, extra, sep):
    sets = [["mars"], ["blue whale"], ["da vinci"], [story.split()[0]] if story.split() else ["x"]]
    before = score_trivia_coverage(story, sets).score
    assert score_trivia_coverage(story + sep + extra, sets).score >= before


# -- exact match --------------------------------------------------------------


def test_exact_match_cases():
    assert score_exact_match("Answer: The Beatles", ["the beatles"]).correct
    assert not score_exact_match("...it is Paris.\n", ["Paris, France"]).correct
    assert not score_exact_match("", ["x"]).correct
    assert score_exact_match("reasoning\nAnswer:\nSalzburg.", ["Salzburg"]).correct
    assert score_exact_match("so\nParis", ["paris"]).correct


@given(st.sampled_from(["Salzburg", "The Beatles", "United States", "Danube River"]),
       st.sampled_from(["", "the ", "The ", "a ", "an "]),
       st.sampled_from(["", ".", "!", "?", "..."]),
       st.sampled_from([str.lower, str.upper, str.title, lambda s: s]))
def test_exact_match_invariance(answer, article, punct, case):
    base = score_exact_match(f"Reasoning...\nAnswer: {answer}", [answer]).correct
    perturbed = score_exact_match(f"Reasoning...\nAnswer: {case(article + answer + punct)}", [answer])
    assert base and perturbed.correct


def test_normalize_answer():
    assert normalize_answer("  The  Beatles! ") == "beatles"


# -- multiple choice ----------------------------------------------------------

OPTS = {"A": "the blue house", "B": "the green house", "C": "the red house", "D": "the barn"}


@pytest.mark.parametrize("output, label", [
    ("...the answer is (B).", "B"),
    ("Answer: D", "D"),
    ("It must be the red house.", "C"),
    ("(A) seems wrong, so (C)", "C"),
    ("Between A and B I pick B", "B"),
    ("A person would pick the barn.", "D"),
    ("**Answer: (A)**", "A"),
])
def test_extract_choice(output, label):
    assert extract_choice(output, OPTS) == label


def test_extract_choice_none():
    with pytest.raises(NoChoice):
        extract_choice("I am unsure.", OPTS)
    assert not score_choice("I am unsure.", OPTS, "A").correct


def test_extract_choice_ignores_out_of_range_labels():
    assert extract_choice("(E) no, Answer: (B)", {"A": "x", "B": "y"}) == "B"


@given(st.text(max_size=200), st.integers(2, 26))
def test_extract_choice_in_set(output, n):
    options = {chr(ord("A") + i): f"option {i}" for i in range(n)}
    try:
        label = extract_choice(output, options)
    except NoChoice:
        return
    assert label in options


# -- judge --------------------------------------------------------------------


def test_judge_pass_fail():
    assert score_with_judge(scripted(judges=["looks good\nVERDICT: PASS"]), "a", "b", "R").score == 1
    assert score_with_judge(scripted(judges=["meh\nVERDICT: FAIL"]), "a", "b", "R").score == 0


def test_judge_retry_then_fail():
    b = scripted(judges=["garbage", "more garbage"])
    with pytest.raises(JudgeUnparseable):
        score_with_judge(b, "a", "b", "R")
    assert [c.purpose_tag for c in b.calls] == ["judge", "judge"]


def test_judge_retry_then_pass():
    v = score_with_judge(scripted(judges=["hmm", "VERDICT: PASS"]), "a", "b", "R")
    assert v.score == 1 and v.graded and len(v.judge_calls) == 2


def test_extract_code():
    assert extract_code("Here:\n```python\ndef f():\n    return 1\n```\nDone") == "def f():\n    return 1"
    assert extract_code("x = 1") == "x = 1"
