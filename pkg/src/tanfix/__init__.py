"""Common fixed point iteration for total asymptotically nonexpansive mappings."""
