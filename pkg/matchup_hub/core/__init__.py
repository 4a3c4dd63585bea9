"""Численное ядро: семейства распределений, IRLS, GLMF, импутация."""
