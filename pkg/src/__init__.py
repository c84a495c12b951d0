# Acceptance harness (src.acceptance_configs, src.test_acceptance)
