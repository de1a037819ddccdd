# Tests package for prolate-ewald
