# Pipeline services: one module per stage
