# vbcert: Lyapunov certificates for value-based reinforcement learning
