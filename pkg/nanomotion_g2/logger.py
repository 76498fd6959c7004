import logging

logger = logging.getLogger("nanomotion_g2")
