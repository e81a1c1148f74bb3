"""Regenerates problems.jsonl and the scripted-provider files used by the CLI smoke runs."""

import json
from pathlib import Path

HERE = Path(__file__).parent

PROBLEMS = [
    ("p01", "A soccer team has 18 players. Each player needs 2 water bottles for a match, and bottles come in packs of 6. How many packs does the coach need?",
     ["Bottles needed: 18 * 2 = <<18*2=36>>36.", "Packs: 36 / 6 = <<36/6=6>>6."], "6", 6),
    ("p02", "Lena buys 3 notebooks at $4 each and a pen for $2. She pays with a $20 bill. How much change does she get?",
     ["Notebooks cost 3 * 4 = <<3*4=12>>12 dollars.", "Total is 12 + 2 = <<12+2=14>>14 dollars.", "Change is 20 - 14 = <<20-14=6>>6 dollars."], "6", 7),
    ("p03", "A robot moves 15 centimeters every second. How many centimeters does it travel in 2 minutes?",
     ["2 minutes is 2 * 60 = <<2*60=120>>120 seconds.", "Distance is 15 * 120 = <<15*120=1800>>1800 centimeters."], "1,800", 6),
    ("p04", "A baker makes 4 trays of muffins with 12 muffins on each tray. She sells 29 muffins. How many muffins are left?",
     ["She makes 4 * 12 = <<4*12=48>>48 muffins.", "Left: 48 - 29 = <<48-29=19>>19 muffins."], "19", 8),
    ("p05", "Sam scores 250 points per level in a game and plays 7 levels. A bonus doubles the total. What is the final score?",
     ["Points before the bonus: 250 * 7 = <<250*7=1750>>1750.", "After the bonus: 1750 * 2 = <<1750*2=3500>>3500."], "3500", 6),
    ("p06", "A garden has 5 rows of tomato plants with 8 plants in each row. Each plant gives 3 tomatoes. How many tomatoes are harvested?",
     ["Plants: 5 * 8 = <<5*8=40>>40.", "Tomatoes: 40 * 3 = <<40*3=120>>120."], "120", 7),
    ("p07", "Priya has 24 colored pencils and gives a third of them to her brother. How many pencils does she keep?",
     ["She gives away 24 / 3 = <<24/3=8>>8 pencils.", "She keeps 24 - 8 = <<24-8=16>>16 pencils."], "16", 3),
    ("p08", "A chess club has 9 boards. Each game needs one board and two players. If 30 students come, how many students must wait?",
     ["9 boards seat 9 * 2 = <<9*2=18>>18 players.", "Waiting: 30 - 18 = <<30-18=12>>12 students."], "12", 6),
    ("p09", "A swimming pool lane is 25 meters long. Maya swims 14 lengths. How many meters does she swim?",
     ["Distance: 25 * 14 = <<25*14=350>>350 meters."], "350", 9),
    ("p10", "A book has 180 pages. Kofi reads 15 pages each day. How many days does it take him to finish?",
     ["Days: 180 / 15 = <<180/15=12>>12."], "12", 6),
    ("p11", "A recipe needs 3 eggs for every 2 cakes. How many eggs are needed for 10 cakes?",
     ["10 cakes is 10 / 2 = <<10/2=5>>5 batches.", "Eggs: 5 * 3 = <<5*3=15>>15."], "15", 4),
    ("p12", "A train ticket costs $7.50 for a child. How much do tickets cost for 4 children?",
     ["Cost: 7.50 * 4 = <<7.5*4=30>>30 dollars."], "30", None),
]

STUDENT_LINES = [
    "Hmm, I am not sure where to start. Should I look at what the question asks first?",
    "I think we need to find out how many things there are altogether before anything else.",
    "So I should multiply the groups together? That seems like the first step.",
    "Okay, I worked that part out. Now I need to use it for the second part of the question.",
    "Wait, do I add or take away here? I keep mixing those up.",
    "I think taking away makes sense because some are used up.",
    "Let me go through the whole thing again slowly.",
    "I am still a bit stuck on the last step.",
    "Could you give me a small hint about the last part?",
    "I will try once more from the beginning.",
]

TEACHER_LINES = [
    "Good start. What information does the problem give you, and what is it asking for?",
    "That is a sensible idea. Which two quantities would you combine first?",
    "Nice reasoning. How could you check that first result makes sense?",
    "Great. What does that number tell you about the next part of the problem?",
    "Think about what happens to the total in the story. Is something being added or removed?",
    "Exactly the kind of thinking we need. Can you finish the calculation?",
    "Take your time. Which step feels least certain to you?",
    "Look back at the question wording. What is the final quantity it wants?",
    "Here is a hint: write each step as a short sentence before you calculate.",
    "You are close. Walk me through your steps one at a time.",
]


def main():
    with open(HERE / "problems.jsonl", "w") as f:
        for pid, question, steps, final, _ in PROBLEMS:
            f.write(json.dumps({"id": pid, "question": question, "answer": "\n".join(steps) + "\n#### " + final}) + "\n")

    rules = []
    for pid, _, _, final, turn in PROBLEMS:
        if turn is not None:
            rules.append({"metadata": {"stage": "student", "problem_id": pid, "turn": str(turn)},
                          "responses": [f"I think the answer is {final}."]})
    rules.append({"metadata": {"stage": "style"}, "responses": [
        "<learning_style>\nperception = sensory | responds to concrete, everyday examples\n"
        "processing = active | wants to try each step right away\n"
        "understanding = sequential | follows one step at a time\n</learning_style>"]})
    rules.append({"metadata": {"stage": "strategy"}, "responses": [
        "1. Tie every quantity to a concrete object from the student's interests.\n"
        "2. Ask the student to try each step before confirming it.\n"
        "3. Move through the solution one step at a time and recap after each."]})
    rules.append({"metadata": {"stage": "teacher", "turn": "0"}, "responses": [
        "Let's read the problem together and put it in our own words. What is happening in the story?"]})
    for t in range(1, 11):
        rules.append({"metadata": {"stage": "teacher", "turn": str(t)}, "responses": [TEACHER_LINES[t - 1]]})
        rules.append({"metadata": {"stage": "student", "turn": str(t)}, "responses": [STUDENT_LINES[t - 1]]})
    rules.append({"metadata": {"stage": "eval"}, "responses": [
        "Good start. What information does the problem give you, and what is it asking for?"]})
    rules.append({"metadata": {"stage": "resolution_judge"}, "responses": ["ONGOING"]})
    with open(HERE / "scripts" / "synthesis.json", "w") as f:
        json.dump({"rules": rules}, f, indent=1)
        f.write("\n")

    judge = {"rules": [
        {"metadata": {"stage": "judge_rank"}, "responses": ["Model 3 < Model 1 < Model 2"]},
        {"metadata": {"stage": "judge_pairwise", "swapped": "false"}, "responses": ["Response 1"]},
        {"metadata": {"stage": "judge_pairwise", "swapped": "true"}, "responses": ["Response 2"]},
    ]}
    with open(HERE / "scripts" / "judge.json", "w") as f:
        json.dump(judge, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
