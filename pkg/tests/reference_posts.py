"""Five storm posts with their published token lists and compound scores."""
from __future__ import annotations

TEXTS = [
    "This is such an Oklahoman sunset! The OU flag in front of the debris from the ice storm at sunset last night. #okwx #BoomerSooner",
    # the original carried a trailing emoji that did not survive extraction
    "Good morning Oklahoma! @cityofokc starts the ice storm debris removal today.",
    "Please help feed hungry Oklahomans. I hear from people daily who struggle to eat because of unemployment... "
    "and recently, our devastating ice storm spoiled a lot of stored food. @reba Text FOOD to 501-501 to donate $10",
    "With the pandemic and the recent catastrophic ice storm, this year has been extremely challenging for all Oklahomans. "
    "Join us in donating to United Way of Central Oklahoma. #supportlocal #community #leadership #downtownokc #okc "
    "#oklahoma #newmark",
    "OKC beginning massive debris pickup effort after last week’s historic ice storm. Right now, 7+ days later, "
    "about 450 people in the city still have not had power restored https://t.co/e48ZPenIB",
]

TOKENS = [
    ["oklahoman", "sunset", "flag", "debris", "ice", "storm", "night", "okwx", "boomersooner"],
    ["good", "morning", "oklahoma", "start", "ice", "storm", "debris", "removal", "today"],
    ["help", "feed", "hungry", "oklahoman", "hear", "people", "daily", "struggle", "eat", "unemployment",
     "recently", "devastating", "ice", "storm", "spoiled", "lot", "stored", "food", "text", "food", "donate"],
    ["pandemic", "recent", "catastrophic", "ice", "storm", "year", "extremely", "challenging", "oklahoman",
     "join", "donating", "united", "way", "central", "oklahoma", "supportlocal", "community", "leadership",
     "downtownokc", "okc", "oklahoma", "newmark"],
    ["okc", "beginning", "massive", "debris", "pickup", "effort", "week", "historic", "ice", "storm", "right",
     "day", "later", "people", "city", "power", "restored"],
]

SCORES = [0.0, 0.6696, -0.6705, 0.4005, -0.2584]
SCORE_TOL = 0.02


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    return len(a & b) / len(a | b) if a | b else 1.0
