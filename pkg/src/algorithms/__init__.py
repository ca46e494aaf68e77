# Value computation, value iteration and TD(0)
