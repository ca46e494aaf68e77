# MDP model, Markov chain structure and Bellman operators
