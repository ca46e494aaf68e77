# Shared utilities (error hierarchy)
