"""Score predicted tool-call sequences against gold: name-matched pairs
weighted by parameter similarity, matched one-to-one so the score stays in
[0, 1], plus the name-only selection F1. Shows why the unmatched double sum
is kept only as a comparison mode.

Run: python demos/04_tool_sequence_scoring.py
"""

from planeval import ToolCall, api_selection_f1, rouge_l, tool_sequence_score


def call(name, **params):
    return ToolCall(name=name, params=tuple((k, str(v)) for k, v in params.items()))


def show(label, score):
    print(f"  {label:34s} acc={score.acc:.3f} recall={score.recall:.3f} f1={score.f1:.3f}")


def main():
    gold = [
        call("search_flights", origin="prg", dest="hub"),
        call("book_flight", flight_id="F12"),
        call("send_mail", to="user", body="done"),
    ]

    print("gold sequence has 3 calls; predictions vary:\n")
    show("exact match", tool_sequence_score(gold, gold))
    show("missing last call", tool_sequence_score(gold[:2], gold))
    pred = [
        call("search_flights", origin="prg", dest="hub"),
        call("book_flight", flight_id="F99"),
        call("send_mail", to="user", body="done"),
    ]
    show("wrong booking parameter", tool_sequence_score(pred, gold))
    print()

    print("parameter similarity is string-level:")
    sim = rouge_l("flight_id=F12", "flight_id=F99")
    print(f"  rouge_l('flight_id=F12', 'flight_id=F99') = {sim:.3f}\n")

    print("name-only selection F1 ignores parameters:")
    print(f"  api_selection_f1 = {api_selection_f1(pred, gold):.3f}\n")

    print("duplicate names are where the matching rule matters:")
    dup_pred = [call("ping", host="a")]
    dup_gold = [call("ping", host="a"), call("ping", host="a")]
    bounded = tool_sequence_score(dup_pred, dup_gold)
    literal = tool_sequence_score(dup_pred, dup_gold, literal=True)
    show("one-to-one matching", bounded)
    show("literal double sum (comparison)", literal)
    print("  the literal form credits one prediction against every same-named")
    print("  gold call, so its 'accuracy' exceeds 1; one-to-one matching is the")
    print("  reported score.")


if __name__ == "__main__":
    main()
