# Numerical core: grids, kernel, Burgers sweep, solver, characteristics, BV analysis
