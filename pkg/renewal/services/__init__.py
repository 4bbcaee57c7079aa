# Domain services: counting, context trees, inference, Bayes factors, simulation
