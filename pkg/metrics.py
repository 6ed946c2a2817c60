from prometheus_client import Counter

# Prometheus metrics
runs_counter = Counter('model_forge_runs_total', 'Artifact runs started', ['runtime'])
hook_calls_counter = Counter('model_forge_hook_calls_total', 'Classification queries sent to hooks', ['kind'])
hook_failures_counter = Counter('model_forge_hook_failures_total', 'Hook failures aborting a run', ['kind'])
diagnostics_counter = Counter('model_forge_diagnostics_total', 'Diagnostics reported by validation', ['code'])
classifications_counter = Counter('model_forge_classifications_total', 'Target classifications by error kind', ['error'])
