# numerics module
