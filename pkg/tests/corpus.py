"""Decomposition corpus: (query, primary, proximity set in order, targets that must be excluded)."""

CORPUS = [
    # one query each for extraction, inference, demand and negation
    ("the blue rug in the bathroom", "blue rug", ["blue rug", "bathroom"], []),
    ("The room is on fire!", "fire extinguisher", ["fire extinguisher"], []),
    ("a towel", "towel", ["towel", "bathroom"], []),
    ("the rug not in the bathroom", "rug", ["rug"], ["bathroom"]),
    # everyday search instructions
    ("find the remote on the table", "remote", ["remote", "table", "living room"], []),
    ("go to the chair next to the desk", "chair", ["chair", "desk"], []),
    ("find the towel in the bathroom", "towel", ["towel", "bathroom"], []),
    ("get the book on the nightstand", "book", ["book", "nightstand"], []),
    ("find a chair", "chair", ["chair"], []),
    ("television", "television", ["television", "living room"], []),
    ("Find the red short pillar candle on the grey nightstand", "red short pillar candle",
     ["red short pillar candle", "grey nightstand"], []),
    ("The mantel clock on the chest of drawers", "mantel clock", ["mantel clock", "chest of drawers"], []),
    # proximity prepositions
    ("find the mug near the sink", "mug", ["mug", "sink", "kitchen"], []),
    ("go to the lamp beside the sofa", "lamp", ["lamp", "sofa"], []),
    ("find the shoe under the bed", "shoe", ["shoe", "bed"], []),
    ("the plant by the window", "plant", ["plant", "window"], []),
    ("find the cat inside the box", "cat", ["cat", "box"], []),
    ("locate the vase on top of the counter", "vase", ["vase", "counter"], []),
    ("the kettle next to the fridge in the kitchen", "kettle", ["kettle", "fridge", "kitchen"], []),
    ("find the laptop in the office", "laptop", ["laptop", "office"], []),
    ("please find the pillow on the bed", "pillow", ["pillow", "bed", "bedroom"], []),
    ("the green mug that is on the table", "green mug", ["green mug", "table", "kitchen"], []),
    ("find the alarm clock next to the wardrobe", "alarm clock", ["alarm clock", "wardrobe", "bedroom"], []),
    ("the printer near the door in the office", "printer", ["printer", "door", "office"], []),
    ("search for the soap under the sink", "soap", ["soap", "sink", "bathroom"], []),
    # non-proximity relations
    ("find the chair far from the window", "chair", ["chair"], ["window"]),
    ("find the cup away from the sink", "cup", ["cup", "kitchen"], ["sink"]),
    ("the towel outside the bathroom", "towel", ["towel"], ["bathroom"]),
    ("go to the rug not in the bedroom", "rug", ["rug"], ["bedroom"]),
    ("the remote on the sofa not in the living room", "remote", ["remote", "sofa"], ["living room"]),
    ("the book on the shelf far from the desk", "book", ["book", "shelf"], ["desk"]),
    ("the lamp not near the bed", "lamp", ["lamp"], ["bed"]),
    # demands
    ("I am thirsty", "water bottle", ["water bottle"], ["glass"]),
    ("I smell smoke", "fire extinguisher", ["fire extinguisher"], []),
    ("I'm tired", "bed", ["bed", "bedroom"], []),
    # bare objects and command phrasing
    ("where is the stapler", "stapler", ["stapler", "office"], []),
    ("bring me the toothbrush", "toothbrush", ["toothbrush", "bathroom"], []),
    ("find the frying pan", "frying pan", ["frying pan", "kitchen"], []),
    ("navigate to the washing machine", "washing machine", ["washing machine", "laundry room"], []),
    ("the sofa", "sofa", ["sofa", "living room"], []),
]
