"""A small scripted world for end-to-end runs without a model.

Ten table tasks, each with two sound plans and two flawed ones. A rule-based
policy plays the model: it writes code that follows whichever plan it was
given, so flawed plans reach wrong answers. Running the real pipeline against
this policy records a replayable transcript, a sandbox stub, and a memory
bank built from a separate history of paraphrased questions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .agent import EXECUTE_REQUEST, PLAN_REQUEST, AgentConfig, solve
from .clients import (Generation, PolicyLLM, ProcessSandbox, RecordingSandbox, tokenize)
from .grammar import OBS_CLOSE, OBS_OPEN, format_action, format_answer
from .memory import HashingEmbedder, MemoryRecord, build_memory, save_bank
from .table import Table, TaskInstance, TaskKind, save_dataset

DEMO_CONFIG = AgentConfig(n_samples=4, retention_ratio=0.5, seed=0)

# logprob for ordinary tokens and for the ones a script marks as doubtful
SURE = -0.01
UNSURE = -1.5


@dataclass
class Script:
    task: TaskInstance
    good_plans: tuple[str, str]
    bad_plans: tuple[str, str]
    good_code: str
    bad_code: str
    history: list[tuple[str, str, str]] = field(default_factory=list)  # (question, good plan, bad plan)
    answer_suffix: str = ""
    order: tuple[int, int, int, int] = (0, 2, 1, 3)  # sample slot -> plan (0,1 good; 2,3 bad)
    doubtful: tuple[str, ...] = ()  # lexemes sampled with low probability on the first try
    draft_code: str = ""  # what the policy writes before refinement, if doubtful

    @property
    def plans(self) -> list[str]:
        return [*self.good_plans, *self.bad_plans]


def _table(columns, *rows) -> Table:
    return Table(tuple(columns), tuple(tuple(str(c) for c in r) for r in rows))


def scripts() -> list[Script]:
    players = _table(["player", "team", "points"], ["Ann", "Hawks", 21], ["Bo", "Owls", 14],
                     ["Cy", "Hawks", 28], ["Di", "Owls", 9], ["Ed", "Hawks", 17])
    films = _table(["title", "year", "gross"], ["Arc", 1998, 40], ["Bay", 2003, 55], ["Cove", 2011, 72],
                   ["Dune", 1995, 31], ["Echo", 2007, 66], ["Fern", 2015, 80])
    medals = _table(["nation", "gold", "silver"], ["Norway", 16, 8], ["Canada", 11, 8],
                    ["Japan", 13, 4], ["Kenya", 6, 12])
    race = _table(["runner", "finish"], ["Lee", "2:41:05"], ["Moss", "2:44:17"], ["Ng", "2:50:30"])
    sales = _table(["month", "region", "sales"], ["Jan", "North", "1,200"], ["Feb", "South", "950"],
                   ["Mar", "North", "1,430"], ["Apr", "East", "870"])
    temps = _table(["city", "high", "low"], ["Oslo", 12, -3], ["Rome", 24, 11], ["Cairo", 35, 19],
                   ["Lima", 22, 15])
    offices = _table(["employee", "region"], ["Ava", "West"], ["Ben", "East"], ["Cal", "West"],
                     ["Dee", "North"], ["Eli", "West"], ["Fay", "East"])
    shop = _table(["item", "price", "stock"], ["pen", "1.25", 40], ["pad", "3.50", 12], ["ink", "7.80", 5])
    votes = _table(["candidate", "votes"], ["Ruiz", 4200], ["Shaw", 3800], ["Tan", 2000])

    return [
        Script(
            TaskInstance("demo-01", players, "What is the average points of players on the Hawks?", "22",
                         TaskKind.TABLE_QA),
            ("Keep only rows where team is Hawks, then compute the average of points and return it.",
             "Filter the rows for the Hawks team, take the mean points, and answer with that value."),
            ("Add up the points column over all players and return the total.",
             "Sum every points value in the table, then report the sum."),
            "pts = {'Ann': 21, 'Cy': 28, 'Ed': 17}\nprint(sum(pts.values()) / len(pts))",
            "pts = [21, 14, 28, 9, 17]\nprint(sum(pts))",
            history=[("What is the average goals of players on the Lions?",
                      "Keep only rows where team is Lions, then compute the average goals and return it.",
                      "Add up the goals column and return the total."),
                     ("Average assists for players on the Bears?",
                      "Filter to the Bears rows, take the mean assists, answer with it.",
                      "Sum all assists values and report the sum.")],
        ),
        Script(
            TaskInstance("demo-02", films, "How many films were released after 2000?", "4", TaskKind.TABLE_QA),
            ("Filter rows where year is greater than 2000, count them, and return the count.",
             "Keep only films with year after 2000 and return the number of rows."),
            ("Sort the films by year descending and return the first title.",
             "Order by year, then look up the top row and report it."),
            "years = [1998, 2003, 2011, 1995, 2007, 2015]\nprint(len([y for y in years if y > 2000]))",
            "films = [('Fern', 2015), ('Cove', 2011)]\nprint(films[0][0])",
            order=(2, 0, 3, 1),
            history=[("How many albums were released after 1990?",
                      "Filter rows where year is after 1990, count them, return the count.",
                      "Sort by year descending and return the first title."),
                     ("How many games were played after 2010?",
                      "Keep only games with year after 2010 and return the number of rows.",
                      "Order by year and report the top row.")],
        ),
        Script(
            TaskInstance("demo-03", medals, "Which nation won the most gold medals?", "Norway", TaskKind.TABLE_QA),
            ("Sort the rows by gold descending and return the nation in the first row.",
             "Rank nations by gold in descending order and answer with the top nation."),
            ("Compute the total of gold plus silver per nation, then return the largest nation.",
             "Add gold and silver, sort by the sum, and report the first nation."),
            "gold = {'Norway': 16, 'Canada': 11, 'Japan': 13, 'Kenya': 6}\nprint(max(gold, key=gold.get))",
            "medals = {'Norway': 24, 'Canada': 19, 'Japan': 17, 'Kenya': 18}\nprint(sorted(medals, key=medals.get)[1])",
            order=(0, 2, 3, 1),
            history=[("Which nation won the most silver medals?",
                      "Sort the rows by silver descending and return the nation in the first row.",
                      "Compute the total of gold plus silver, then return the largest nation."),
                     ("Which team scored the most goals?",
                      "Rank teams by goals descending and answer with the top team.",
                      "Add goals and assists, sort by the sum, report the first team.")],
        ),
        Script(
            TaskInstance("demo-04", race, "How many seconds after Lee did Moss finish?", "192 seconds",
                         TaskKind.TABLE_QA),
            ("Look up the finish times of Lee and Moss, convert them to datetime, subtract, and return the seconds.",
             "Extract both finish strings, parse them as times, compute the difference in seconds, and answer."),
            ("Look up the finish times and subtract the strings directly, then return the difference.",
             "Retrieve both times, take the difference of the minutes field, and report it."),
            "from datetime import datetime\nfmt = '%H:%M:%S'\n"
            "lee = datetime.strptime('2:41:05', fmt)\nmoss = datetime.strptime('2:44:17', fmt)\n"
            "print(int((moss - lee).total_seconds()))",
            "lee, moss = '2:41:05', '2:44:17'\nprint(int(moss.split(':')[1]) - int(lee.split(':')[1]))",
            answer_suffix=" seconds",
            doubtful=("moss", "'2:44:17'"),
            draft_code="from datetime import datetime\nfmt = '%H:%M:%S'\n"
                       "lee = datetime.strptime('2:41:05', fmt)\nmoss = datetime.strptime('2:44:17', fmt)\n"
                       "print(int((moss - lee).total_seconds()))",
            history=[("How many seconds after Kim did Park finish?",
                      "Look up both finish times, convert them to datetime, subtract, return the seconds.",
                      "Look up the finish times and subtract the strings directly, then return the difference."),
                     ("How many seconds behind the winner was the runner-up?",
                      "Extract both finish strings, parse them as times, compute the difference, answer.",
                      "Retrieve both times, take the difference of the minutes, report it.")],
        ),
        Script(
            TaskInstance("demo-05", medals, "Canada won more gold medals than Japan.", "false",
                         TaskKind.FACT_VERIFICATION),
            ("Look up the gold values for Canada and Japan, compare them, and return whether the claim holds.",
             "Find the rows for Canada and Japan, check if Canada's gold is greater than Japan's, answer yes or no."),
            ("Sort the nations by silver descending and return yes if Canada ranks above Japan.",
             "Order the rows by total medals, then answer whether Canada is first."),
            "gold = {'Canada': 11, 'Japan': 13}\nprint('yes' if gold['Canada'] > gold['Japan'] else 'no')",
            "silver = {'Canada': 8, 'Japan': 4}\nprint('yes' if silver['Canada'] > silver['Japan'] else 'no')",
            history=[("Kenya won more gold medals than Norway.",
                      "Look up the gold values for Kenya and Norway, compare them, return whether the claim holds.",
                      "Sort the nations by silver descending and return yes if Kenya ranks above Norway."),
                     ("Japan won more gold medals than Kenya.",
                      "Find the rows, check if Japan's gold is greater than Kenya's, answer yes or no.",
                      "Order the rows by total medals, then answer whether Japan is first.")],
        ),
        Script(
            TaskInstance("demo-06", sales, "What were the total sales in the North region?", "2630",
                         TaskKind.TABLE_QA),
            ("Keep only rows where region is North, convert sales to numbers, sum them, and return the total.",
             "Filter to North rows, parse the sales strings as numeric, add up the values, answer."),
            ("Sum the sales column for all regions and return it.",
             "Count the North rows and report the count."),
            "sales = ['1,200', '1,430']\nprint(sum(int(s.replace(',', '')) for s in sales))",
            "sales = [1200, 950, 1430, 870]\nprint(sum(sales))",
            order=(2, 3, 0, 1),
            history=[("What were the total sales in the South region?",
                      "Keep only rows where region is South, convert sales to numbers, sum them, return the total.",
                      "Sum the sales column for all regions and return it."),
                     ("What was the total revenue for the East stores?",
                      "Filter to East rows, parse the revenue strings as numeric, add up the values, answer.",
                      "Count the East rows and report the count.")],
        ),
        Script(
            TaskInstance("demo-07", temps, "What is the difference between the highest high and the lowest low?",
                         "38", TaskKind.TABLE_QA),
            ("Find the maximum of high and the minimum of low, subtract them, and return the difference.",
             "Take the max high, take the min low, compute the difference, answer."),
            ("Look up the high and low for Oslo and subtract them.",
             "Retrieve the first row, subtract low from high, report it."),
            "high = [12, 24, 35, 22]\nlow = [-3, 11, 19, 15]\nprint(max(high) - min(low))",
            "oslo_high, oslo_low = 12, -3\nprint(oslo_high - oslo_low)",
            history=[("What is the difference between the highest score and the lowest score?",
                      "Find the maximum score and the minimum score, subtract them, return the difference.",
                      "Look up the scores for the first row and subtract them."),
                     ("What is the gap between the max price and the min price?",
                      "Take the max price, take the min price, compute the difference, answer.",
                      "Retrieve the first row, subtract, report it.")],
        ),
        Script(
            TaskInstance("demo-08", offices, "Which region has the most employees?", "West", TaskKind.TABLE_QA),
            ("Group by region, count the employees in each group, sort descending, and return the top region.",
             "For each region count the rows, order by the count, answer with the first region."),
            ("Look up the region of the first employee and return it.",
             "Retrieve the last row and report its region."),
            "from collections import Counter\n"
            "regions = ['West', 'East', 'West', 'North', 'West', 'East']\n"
            "print(Counter(regions).most_common(1)[0][0])",
            "regions = ['West', 'East', 'West', 'North', 'West', 'East']\nprint(regions[-1])",
            order=(3, 2, 1, 0),
            history=[("Which department has the most staff?",
                      "Group by department, count the staff, sort descending, return the top department.",
                      "Look up the department of the first employee and return it."),
                     ("Which city has the most stores?",
                      "For each city count the rows, order by the count, answer with the first city.",
                      "Retrieve the last row and report its city.")],
        ),
        Script(
            TaskInstance("demo-09", shop, "How much do 4 pads cost?", "14", TaskKind.MATH_WORD),
            ("Look up the price of pad, multiply it by 4, and return the cost.",
             "Find the pad row, get the value of price, times 4, answer with the result."),
            ("Add the prices of all items and return the sum.",
             "Look up the stock of pad and return it."),
            "price = 3.50\nprint(price * 4)",
            "prices = [1.25, 3.50, 7.80]\nprint(round(sum(prices), 2))",
            history=[("How much do 3 pens cost?",
                      "Look up the price of pen, multiply it by 3, return the cost.",
                      "Add the prices of all items and return the sum."),
                     ("How much do 2 bottles of ink cost?",
                      "Find the ink row, get the value of price, times 2, answer.",
                      "Look up the stock of ink and return it.")],
        ),
        Script(
            TaskInstance("demo-10", votes, "What percentage of all votes did Ruiz receive?", "42",
                         TaskKind.TABLE_QA),
            ("Compute the total of votes, look up the votes for Ruiz, divide, convert to a percentage, and return it.",
             "Sum all votes, find Ruiz's votes, compute the ratio as a percentage, answer."),
            ("Look up the votes for Ruiz and return them.",
             "Find the maximum votes and report it."),
            "votes = {'Ruiz': 4200, 'Shaw': 3800, 'Tan': 2000}\nprint(round(100 * votes['Ruiz'] / sum(votes.values()), 2))",
            "votes = {'Ruiz': 4200}\nprint(votes['Ruiz'])",
            order=(0, 3, 2, 1),
            history=[("What percentage of all votes did Shaw receive?",
                      "Compute the total of votes, look up the votes for Shaw, divide, convert to a percentage, return it.",
                      "Look up the votes for Shaw and return them."),
                     ("What share of the seats did the Greens win, in percent?",
                      "Sum all seats, find the Greens' seats, compute the ratio as a percentage, answer.",
                      "Find the maximum seats and report it.")],
        ),
    ]


def _question(messages) -> str:
    m = re.search(r"^Question: (.*)$", messages[1]["content"], re.M)
    return m.group(1) if m else ""


def _plan_in(messages) -> str:
    for msg in messages:
        if msg["role"] == "assistant" and msg["content"].startswith("Plan:\n"):
            return msg["content"][len("Plan:\n"):]
    return ""


def _generation(text: str, doubtful: Sequence[str] = ()) -> Generation:
    toks = []
    marked = set()
    raw = text.encode("utf-8")
    for lex in doubtful:
        for m in re.finditer(re.escape(lex.encode("utf-8")), raw):
            marked.update(range(m.start(), m.end()))
    for t in tokenize(text, SURE):
        lp = UNSURE if any(b in marked for b in range(t.start, t.end)) else SURE
        toks.append(type(t)(t.text, lp, t.start, t.end))
    return Generation(text, tuple(toks))


class DemoPolicy:
    """Plays the model for the scripted tasks; see the module docstring."""

    def __init__(self, items: Sequence[Script], base_seed: int = 0):
        self.by_question = {s.task.question: s for s in items}
        self.base_seed = base_seed

    def __call__(self, messages, seed) -> Generation:
        script = self.by_question[_question(messages)]
        last = messages[-1]["content"]
        if last == PLAN_REQUEST:
            slot = (seed - self.base_seed) % len(script.order)
            return _generation(script.plans[script.order[slot]])
        plan = _plan_in(messages)
        good = plan in script.good_plans
        code = script.good_code if good else script.bad_code
        if last == EXECUTE_REQUEST:
            if good and script.doubtful:
                return _generation(format_action("Draft the computation from the plan.", script.draft_code or code),
                                   script.doubtful)
            return _generation(format_action("Write code for the plan.", code))
        if last.startswith("Before this code runs"):
            return _generation(format_action("Double-checked the names and literals against the table.", code))
        if last.startswith(OBS_OPEN):
            value = last[len(OBS_OPEN):last.index(OBS_CLOSE)].strip()
            return _generation(format_answer("The program printed the result.", value + script.answer_suffix))
        return _generation("I am not sure what to do.")


def history_records(items: Sequence[Script]) -> tuple[list[TaskInstance], list[dict]]:
    """Paraphrased past tasks plus one good and one bad attempt each, as a trajectory dump."""
    tasks, dump = [], []
    for s in items:
        for k, (question, good, bad) in enumerate(s.history):
            tid = f"{s.task.id}-h{k}"
            tasks.append(TaskInstance(tid, s.task.table, question, f"gold-{tid}", s.task.kind))
            dump.append({"task_id": tid, "plan": good, "answer": f"gold-{tid}", "executable": True})
            dump.append({"task_id": tid, "plan": bad, "answer": f"wrong-{tid}", "executable": True})
        dump.append({"task_id": f"{s.task.id}-h0", "plan": "Crashed attempt.", "answer": None,
                     "executable": False})
    return tasks, dump


def write_fixture(out_dir, dimension: int = 256, configs: Sequence[AgentConfig] | None = None) -> Path:
    """Materialize the demo world into ``out_dir`` and return it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = scripts()
    tasks = [s.task for s in items]
    save_dataset(tasks, out / "dataset.jsonl")

    hist_tasks, dump = history_records(items)
    save_dataset(hist_tasks, out / "history.jsonl")
    with open(out / "history_dump.jsonl", "w", encoding="utf-8") as fh:
        for rec in dump:
            fh.write(json.dumps(rec) + "\n")
    gold = {t.id: t for t in hist_tasks}
    provider = HashingEmbedder(dimension)
    records = [MemoryRecord(r["task_id"], gold[r["task_id"]].question, r["plan"], r["answer"], r["executable"],
                            gold[r["task_id"]].gold_answer, gold[r["task_id"]].kind) for r in dump]
    bank = build_memory(records, provider)
    save_bank(bank, out / "memory.jsonl")

    llm = PolicyLLM(DemoPolicy(items, DEMO_CONFIG.seed))
    sandbox = RecordingSandbox(ProcessSandbox())
    base = DEMO_CONFIG
    runs = configs or [base, AgentConfig(**{**base.__dict__, "retention_ratio": 1.0})]
    for cfg in runs:
        for t in tasks:
            solve(t, bank, llm, sandbox, provider, cfg)
            solve(t, None, llm, sandbox, provider, cfg)
    llm.dump(out / "transcript.json")
    sandbox.dump(out / "sandbox.json")
    return out
