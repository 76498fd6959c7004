EXIT_0_OK = 0
EXIT_1_RUNTIME_FAILURE = 1
EXIT_2_VALIDATION_FAILURE = 2
EXIT_3_NON_CONVERGENCE = 3

EXIT_PHRASES = {
    EXIT_0_OK: "OK",
    EXIT_1_RUNTIME_FAILURE: "Runtime Failure",
    EXIT_2_VALIDATION_FAILURE: "Validation Failure",
    EXIT_3_NON_CONVERGENCE: "Non-Convergence",
}
