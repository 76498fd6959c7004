from typing import Callable
from typing import Union

import numpy as np

FloatArray = np.ndarray
ArrayLike = Union[float, np.ndarray]

# tau (s) -> dimensionless, vectorised
TauFunc = Callable[[np.ndarray], np.ndarray]
# t (s) -> pump rate (1/s), vectorised
PumpFunc = Callable[[np.ndarray], np.ndarray]
