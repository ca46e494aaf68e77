# Positive-system and MJLS stability certificates
